#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "../oracles/gen.hpp"
#include "omni/error.hpp"
#include "omni/vocoder.hpp"
#include "omni/wav.hpp"

using namespace omni;

TEST_CASE("mock vocoder emits one sine segment per unit") {
  MockVocoder voc;
  CHECK(voc.config().samples_per_unit() == 320);
  const std::size_t units[] = {3};
  const Waveform w = voc.synthesize(units);
  REQUIRE(w.samples.size() == 320);
  CHECK(w.duration_ms() == doctest::Approx(20.0));
  const double f = 100.0 + 3 * 5.0;
  for (std::size_t i = 0; i < 320; i += 17) {
    const double expect = std::lround(0.3 * 32767 * std::sin(2 * M_PI * f * static_cast<double>(i) / 16000.0));
    CHECK(w.samples[i] == static_cast<std::int16_t>(expect));
  }
  CHECK(voc.synthesize(std::span<const std::size_t>{}).samples.empty());
}

TEST_CASE("synthesis of a concatenation is the concatenation of syntheses") {
  MockVocoder voc;
  gen::Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = rng.indices(rng.index(0, 6), 0, 15);
    const auto b = rng.indices(rng.index(0, 6), 0, 15);
    std::vector<std::size_t> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    Waveform joined = voc.synthesize(a);
    joined.append(voc.synthesize(b));
    CHECK(voc.synthesize(ab) == joined);
  }
}

TEST_CASE("vocoder config validation") {
  MockVocoderConfig c;
  c.sample_rate = 0;
  CHECK_THROWS_AS(MockVocoder{c}, ConfigError);
  c = {};
  c.amplitude = 1.5;
  CHECK_THROWS_AS(MockVocoder{c}, ConfigError);
}

TEST_CASE("wav encoding has a 44-byte header and round trips") {
  Waveform w;
  gen::Rng rng(3);
  for (int i = 0; i < 101; ++i) w.samples.push_back(static_cast<std::int16_t>(rng.index(0, 65535) - 32768));
  const auto bytes = encode_wav(w);
  CHECK(bytes.size() == 44 + 2 * w.samples.size());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "RIFF");
  CHECK(decode_wav(bytes) == w);

  const auto path = std::filesystem::temp_directory_path() / "omni_test.wav";
  write_wav(path, w);
  CHECK(std::filesystem::file_size(path) == bytes.size());
  CHECK(read_wav(path) == w);
  std::filesystem::remove(path);
}

TEST_CASE("wav decoding skips unknown chunks and rejects malformed input") {
  Waveform w;
  w.samples = {1, -2, 3};
  auto bytes = encode_wav(w);
  // Insert a LIST chunk between fmt and data.
  const std::uint8_t list[] = {'L', 'I', 'S', 'T', 2, 0, 0, 0, 'a', 'b'};
  bytes.insert(bytes.begin() + 36, std::begin(list), std::end(list));
  CHECK(decode_wav(bytes) == w);

  const auto good = encode_wav(w);
  CHECK_THROWS_AS(decode_wav(std::span(good).first(20)), ParseError);
  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_wav(bad), ParseError);
  bad = good;
  bad[22] = 2;  // stereo
  CHECK_THROWS_AS(decode_wav(bad), ParseError);
}

TEST_CASE("http vocoder posts units and decodes the returned wav") {
  httplib::Server server;
  MockVocoder reference;
  server.Post("/synthesize", [&](const httplib::Request& req, httplib::Response& res) {
    const auto j = nlohmann::json::parse(req.body);
    const auto units = j.at("units").get<std::vector<std::size_t>>();
    const auto bytes = encode_wav(reference.synthesize(units));
    res.set_content(std::string(bytes.begin(), bytes.end()), "audio/wav");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpVocoder remote("127.0.0.1", port);
  const std::vector<std::size_t> units{1, 4, 2};
  CHECK(remote.synthesize(units) == reference.synthesize(units));
  server.stop();
  th.join();

  HttpVocoder dead("127.0.0.1", port, "/synthesize", 16000, 1);
  CHECK_THROWS_AS(dead.synthesize(units), IoError);
}
