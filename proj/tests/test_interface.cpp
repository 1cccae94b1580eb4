#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "gcp/errors.hpp"
#include "gcp/image_io.hpp"
#include "gcp/service.hpp"
#include "httplib.h"
#include "tiny.hpp"

using namespace gcp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path& run_root() {
  static const fs::path root = [] {
    auto r = fs::temp_directory_path() / "gcp_interface_run";
    tiny::run(r);
    return r;
  }();
  return root;
}

std::vector<std::uint8_t> input_png() {
  torch::manual_seed(11);
  return encode_png(RgbImage(torch::rand({3, 32, 32})));
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Service make_service(ServiceOptions options = {}) {
  RunPaths paths{run_root()};
  return Service(load_colorization_model(paths), load_directions(paths.directions()), checkpoint_digests(paths),
                 options);
}

std::string request(const std::vector<std::uint8_t>& png, int64_t cls, json extra = json::object()) {
  extra["image"] = base64_encode(png);
  extra["class_label"] = cls;
  return extra.dump();
}

int run_cli(const std::string& args) {
  return std::system((std::string(GCPCOLOR_PATH) + " " + args + " > /dev/null 2>&1").c_str());
}

}  // namespace

TEST_CASE("base64 codec") {
  CHECK(base64_encode({}) == "");
  CHECK(base64_encode({'f'}) == "Zg==");
  CHECK(base64_encode({'f', 'o'}) == "Zm8=");
  CHECK(base64_encode({'f', 'o', 'o', 'b', 'a', 'r'}) == "Zm9vYmFy");
  std::vector<std::uint8_t> all(256);
  for (int i = 0; i < 256; ++i) all[i] = static_cast<std::uint8_t>(i);
  CHECK(base64_decode(base64_encode(all)) == all);
  CHECK_THROWS_AS(base64_decode("Zm9"), ValidationError);
  CHECK_THROWS_AS(base64_decode("Zm9v!mFy"), ValidationError);
  CHECK_THROWS_AS(base64_decode("Z==="), ValidationError);
}

TEST_CASE("colorize endpoint matches the shared request path") {
  auto service = make_service();
  auto png = input_png();
  auto r = service.handle("POST", "/colorize", request(png, 1));
  REQUIRE(r.status == 200);
  auto bytes = base64_decode(r.body["image"].get<std::string>());
  auto model = load_colorization_model(RunPaths{run_root()});
  auto direct = colorize_request(model, png, 1);
  CHECK(bytes == direct.png);
  CHECK(r.body["z"].size() == 16);
  CHECK(r.body["timing_ms"].get<double>() >= 0.0);

  auto seeded = service.handle("POST", "/colorize", request(png, 1, {{"seed", 4}}));
  auto seeded2 = service.handle("POST", "/colorize", request(png, 1, {{"seed", 4}}));
  CHECK(seeded.body["image"] == seeded2.body["image"]);
  CHECK(seeded.body["z"] != r.body["z"]);

  auto over = service.handle("POST", "/colorize", request(png, 1, {{"z_override", r.body["z"]}}));
  CHECK(over.body["image"] == r.body["image"]);
}

TEST_CASE("diversify, walk and directions endpoints") {
  auto service = make_service();
  auto png = input_png();
  auto d = service.handle("POST", "/diversify", request(png, 0, {{"sigma", 0.7}, {"n", 3}, {"seed", 2}}));
  REQUIRE(d.status == 200);
  CHECK(d.body["images"].size() == 3);
  CHECK(d.body["images"][0]["z"] != d.body["images"][1]["z"]);

  auto w = service.handle("POST", "/walk", request(png, 0, {{"direction", 1}, {"alpha", "-2:2:0.5"}}));
  REQUIRE(w.status == 200);
  REQUIRE(w.body["frames"].size() == 9);
  CHECK(w.body["frames"][0]["alpha"].get<double>() == -2.0);
  CHECK(w.body["frames"][8]["alpha"].get<double>() == 2.0);
  auto w2 = service.handle("POST", "/walk", request(png, 0, {{"direction", 1}, {"alphas", {0.0, 1.5}}}));
  CHECK(w2.body["frames"].size() == 2);

  auto dirs = service.handle("GET", "/directions", "");
  REQUIRE(dirs.status == 200);
  CHECK(dirs.body["directions"].size() == 4);
  CHECK(dirs.body["latent_dim"] == 16);
  double prev = 1e300;
  for (const auto& e : dirs.body["directions"]) {
    CHECK(e["singular_value"].get<double>() <= prev);
    prev = e["singular_value"].get<double>();
  }
}

TEST_CASE("health reports checkpoint digests") {
  auto service = make_service();
  auto h = service.handle("GET", "/health", "");
  REQUIRE(h.status == 200);
  CHECK(h.body["status"] == "ok");
  CHECK(h.body["variant"] == "full");
  CHECK(h.body["resolution"] == 32);
  CHECK(h.body["num_classes"] == 3);
  RunPaths paths{run_root()};
  bool found = false;
  for (const auto& [name, digest] : h.body["checkpoints"].items()) {
    CHECK(digest.get<std::string>().size() == 16);
    if (name == "colorizer") {
      CHECK(digest == file_digest(paths.colorizer() / "colorizer.tensors"));
      found = true;
    }
  }
  CHECK(found);
}

TEST_CASE("malformed requests get structured errors") {
  ServiceOptions small;
  small.max_image_bytes = 256;
  auto service = make_service();
  auto png = input_png();
  auto code_of = [](const ServiceResponse& r) { return r.body["error"]["code"].get<std::string>(); };

  auto truncated = base64_encode(png);
  truncated.resize(truncated.size() - 3);
  auto r = service.handle("POST", "/colorize", json{{"image", truncated}, {"class_label", 0}}.dump());
  CHECK(r.status == 400);
  CHECK(code_of(r) == "validation");
  CHECK(!r.body["error"]["message"].get<std::string>().empty());

  CHECK(service.handle("POST", "/colorize", "{not json").status == 400);
  CHECK(service.handle("POST", "/colorize", json{{"class_label", 0}}.dump()).status == 400);
  CHECK(service.handle("POST", "/colorize", request(png, 3)).status == 400);
  CHECK(service.handle("POST", "/colorize", request(png, 0, {{"z_override", {1.0, 2.0}}})).status == 400);
  CHECK(service.handle("POST", "/colorize", request({1, 2, 3, 4}, 0)).status == 400);
  CHECK(service.handle("POST", "/diversify", request(png, 0, {{"sigma", -1.0}})).status == 400);
  CHECK(service.handle("POST", "/diversify", request(png, 0, {{"n", 65}})).status == 400);
  CHECK(service.handle("POST", "/walk", request(png, 0, {{"direction", 99}})).status == 400);
  CHECK(service.handle("POST", "/walk", request(png, 0, {{"alpha", "1:0:0"}})).status == 400);
  CHECK(service.handle("GET", "/nowhere", "").status == 404);

  auto limited = make_service(small);
  auto big = limited.handle("POST", "/colorize", request(png, 0));
  CHECK(big.status == 413);
  CHECK(code_of(big) == "payload_too_large");
}

TEST_CASE("HTTP listener serves the same bytes") {
  auto service = make_service();
  const int port = service.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);
  auto png = input_png();
  auto res = client.Post("/colorize", request(png, 2), "application/json");
  REQUIRE(res);
  CHECK(res->status == 200);
  auto direct = service.handle("POST", "/colorize", request(png, 2));
  CHECK(json::parse(res->body)["image"] == direct.body["image"]);
  auto bad = client.Post("/colorize", "{", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  service.stop();
}

TEST_CASE("CLI writes the bytes the service returns") {
  auto service = make_service();
  auto png = input_png();
  auto dir = fs::temp_directory_path() / "gcp_cli_out";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "in.png", std::ios::binary);
    out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
  }
  const auto common = " --run " + run_root().string() + " --in " + (dir / "in.png").string();
  REQUIRE(run_cli("colorize" + common + " --class 1 --out " + (dir / "c.png").string()) == 0);
  auto http = service.handle("POST", "/colorize", request(png, 1));
  CHECK(read_bytes(dir / "c.png") == base64_decode(http.body["image"].get<std::string>()));

  REQUIRE(run_cli("colorize" + common + " --class 1 --seed 4 --out " + (dir / "s.png").string()) == 0);
  auto seeded = service.handle("POST", "/colorize", request(png, 1, {{"seed", 4}}));
  CHECK(read_bytes(dir / "s.png") == base64_decode(seeded.body["image"].get<std::string>()));

  REQUIRE(run_cli("walk" + common + " --class 0 --direction 1 --alpha=-2:2:0.5 --out " + (dir / "walk").string()) == 0);
  auto walk = service.handle("POST", "/walk", request(png, 0, {{"direction", 1}, {"alpha", "-2:2:0.5"}}));
  int frames = 0;
  for (const auto& e : fs::directory_iterator(dir / "walk")) frames += e.path().extension() == ".png";
  CHECK(frames == 9);
  for (int i = 0; i < 9; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.png", i);
    CHECK(read_bytes(dir / "walk" / name) == base64_decode(walk.body["frames"][i]["image"].get<std::string>()));
  }

  CHECK(run_cli("colorize" + common + " --class 7 --out " + (dir / "x.png").string()) != 0);
  CHECK(run_cli("colorize --run " + (dir / "missing").string() + " --in " + (dir / "in.png").string() +
                " --class 0 --out " + (dir / "x.png").string()) != 0);
  fs::remove_all(dir);
}
