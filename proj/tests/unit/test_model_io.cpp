#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "dvgnn/errors.hpp"
#include "dvgnn/model_io.hpp"
#include "helpers.hpp"

using namespace dvgnn;
namespace fs = std::filesystem;

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int k = 0; k < bytes; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

ParamStore random_store(Rng& rng) {
  ParamStore s;
  s.add("enc.W0", testutil::random_matrix(rng, 3, 5));
  s.add("dec.Sigma", testutil::random_matrix(rng, 4, 4));
  s.add("fc.out_b", testutil::random_matrix(rng, 1, 7));
  return s;
}

}  // namespace

TEST_CASE("encoding follows the documented byte layout") {
  ParamStore s;
  s.add("ab", Tensor::from_rows({{1.5, -0.0}}));
  std::string expected = "DVGN";
  put_le(expected, kModelFormatVersion, 2);
  put_le(expected, 1, 4);
  put_le(expected, 2, 2);
  expected += "ab";
  put_le(expected, 2, 1);
  put_le(expected, 1, 4);
  put_le(expected, 2, 4);
  put_le(expected, std::bit_cast<std::uint64_t>(1.5), 8);
  put_le(expected, std::bit_cast<std::uint64_t>(-0.0), 8);
  CHECK(encode_params(s) == expected);
}

TEST_CASE("parameter round trip is bit exact") {
  Rng rng(1);
  ParamStore s = random_store(rng);
  s.value("fc.out_b")[0] = -0.0;
  s.value("fc.out_b")[1] = 1e-310;  // subnormal
  ParamStore back = decode_params(encode_params(s));
  CHECK(back.names() == s.names());
  for (const auto& name : s.names()) {
    const Tensor &a = s.value(name), &b = back.value(name);
    REQUIRE(a.shape() == b.shape());
    for (std::size_t k = 0; k < a.size(); ++k)
      CHECK(std::bit_cast<std::uint64_t>(a[k]) == std::bit_cast<std::uint64_t>(b[k]));
  }

  fs::path file = fs::temp_directory_path() / "dvgnn_io_test.dvgn";
  save_params(file.string(), s);
  ParamStore loaded = load_params(file.string());
  CHECK(encode_params(loaded) == encode_params(s));
  fs::remove(file);
  CHECK_THROWS_AS(load_params(file.string()), DataError);
}

TEST_CASE("corrupt input is rejected") {
  Rng rng(2);
  std::string bytes = encode_params(random_store(rng));
  for (std::size_t cut = 0; cut < bytes.size(); ++cut)
    CHECK_THROWS_AS(decode_params(bytes.substr(0, cut)), DataError);
  CHECK_THROWS_AS(decode_params(bytes + "x"), DataError);

  std::string magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_params(magic), DataError);

  std::string version = bytes;
  version[4] = static_cast<char>(kModelFormatVersion + 1);
  CHECK_THROWS_AS(decode_params(version), DataError);

  ParamStore one;
  one.add("w", Tensor::from_rows({{1.0}}));
  std::string single = encode_params(one);
  // Same record twice with the count bumped to 2.
  std::string dup = single.substr(0, 6);
  put_le(dup, 2, 4);
  dup += single.substr(10) + single.substr(10);
  CHECK_THROWS_AS(decode_params(dup), DataError);

  try {
    decode_params(bytes.substr(0, 20), "model.dvgn");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("model.dvgn") != std::string::npos);
  }
}

TEST_CASE("run configuration round trip") {
  RunConfig c;
  c.train.lr_graph = 0.0025;
  c.train.lr_forecast = 1.0 / 3.0;
  c.train.epochs_graph = 3;
  c.train.epochs_forecast = 9;
  c.train.batch = 5;
  c.train.seed = 1234567890123ull;
  c.train.reg_weight = 0.0;
  c.train.grad_clip = 2.5;
  c.train.joint = true;
  c.train.static_graph = true;
  c.hidden1 = 7;
  c.hidden2 = 3;
  c.p = 11;
  c.horizon = 4;
  c.threshold = 0.35;
  c.temporal_kernel = 5;
  c.channels = 6;
  c.mask = "on";
  c.linear_logsigma = true;
  c.decoder_mode = DecoderMode::Posterior;
  c.edge_train_fraction = 0.65;

  fs::path file = fs::temp_directory_path() / "dvgnn_io_config.ini";
  std::ofstream(file) << run_config_text(c) << "data = elsewhere\n";
  RunConfig b = load_run_config(file.string());
  fs::remove(file);
  CHECK(run_config_text(b) == run_config_text(c));
  CHECK(b.train.lr_forecast == c.train.lr_forecast);  // doubles survive exactly
  CHECK(b.train.seed == c.train.seed);
  CHECK(b.train.joint);
  CHECK(b.train.static_graph);
  CHECK(b.decoder_mode == DecoderMode::Posterior);
  CHECK(b.linear_logsigma);

  CHECK(run_config_text(run_config_from({}, "x")) == run_config_text(RunConfig{}));
  CHECK_THROWS_AS(run_config_from({{"batch", "many"}}, "x"), DataError);
  CHECK_THROWS_AS(run_config_from({{"mask", "maybe"}}, "x"), DataError);
  CHECK_THROWS_AS(run_config_from({{"ablation", "both"}}, "x"), DataError);
}
