#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gcp/errors.hpp"
#include "gcp/optim_state.hpp"
#include "tiny.hpp"

using namespace gcp;
namespace fs = std::filesystem;

namespace {

std::vector<torch::Tensor> snapshot(torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  for (const auto& b : m.buffers()) out.push_back(b.detach().clone());
  return out;
}

bool same(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

TensorMap through_disk(const TensorMap& state, const std::string& name) {
  auto path = fs::temp_directory_path() / name;
  write_tensors(path, state);
  auto back = read_tensors(path);
  fs::remove(path);
  return back;
}

}  // namespace

TEST_CASE("tensor files and metadata round trip") {
  TensorMap m{{"a", torch::randn({2, 3})}, {"b", torch::arange(5, torch::kInt64)}, {"c", torch::randn({4}, torch::kFloat64)}};
  auto back = through_disk(m, "gcp_tensor_io.tensors");
  REQUIRE(back.size() == 3);
  for (const auto& [k, v] : m) CHECK(torch::equal(back.at(k), v));
  Metadata md;
  md.set("x", int64_t{3});
  md.set("y", 0.125);
  md.set("z", std::vector<int64_t>{1, 2, 3});
  md.set("name", "hello world");
  auto path = fs::temp_directory_path() / "gcp_md.txt";
  md.write(path);
  auto md2 = Metadata::read(path);
  CHECK(md2.get_int("x") == 3);
  CHECK(md2.get_double("y") == 0.125);
  CHECK(md2.get_ints("z") == std::vector<int64_t>{1, 2, 3});
  CHECK(md2.get("name") == "hello world");
  CHECK_THROWS_AS(md2.get("missing"), CheckpointError);
  fs::remove(path);
  auto bad = fs::temp_directory_path() / "gcp_bad.tensors";
  std::ofstream(bad) << "not a tensor file";
  CHECK_THROWS_AS(read_tensors(bad), CheckpointError);
  fs::remove(bad);
}

TEST_CASE("prior checkpoints reproduce generation") {
  auto c = tiny::config();
  auto gan = PriorGan::create(c.generator, c.prior_discriminator);
  auto dir = fs::temp_directory_path() / "gcp_prior_ckpt";
  fs::remove_all(dir);
  save_prior(dir, gan);
  auto back = load_prior(dir);
  gan.generator->eval();
  back.generator->eval();
  LatentCode code{sample_latent(3, c.latent_dim), 1};
  auto [a, pa] = generate(gan.generator, code);
  auto [b, pb] = generate(back.generator, code);
  CHECK(torch::equal(a.tensor(), b.tensor()));
  CHECK(pa.size() == pb.size());
  CHECK_THROWS_AS(load_prior(dir / "nothing"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("prior trainer resumes bit-exactly") {
  auto c = tiny::config();
  auto data = tiny::data(8);
  auto run = [&](int before, bool resume) {
    auto gan = PriorGan::create(c.generator, c.prior_discriminator);
    PriorGanTrainer t(gan, c.prior);
    for (int i = 0; i < before; ++i) t.step(data);
    if (resume) {
      auto state = through_disk(t.state(), "gcp_prior_state.tensors");
      auto gan2 = PriorGan::create(c.generator, c.prior_discriminator);
      PriorGanTrainer t2(gan2, c.prior);
      t2.load_state(state);
      CHECK(t2.step_count() == before);
      t2.step(data);
      return snapshot(*gan2.generator);
    }
    t.step(data);
    return snapshot(*gan.generator);
  };
  CHECK(same(run(2, false), run(2, true)));
}

TEST_CASE("stage 1 keeps the prior frozen and resumes") {
  auto c = tiny::config();
  auto data = tiny::data(8);
  auto prior = PriorGan::create(c.generator, c.prior_discriminator);
  auto g0 = snapshot(*prior.generator);
  auto d0 = snapshot(*prior.discriminator);
  auto encoder = make_encoder(c.encoder);
  auto e0 = snapshot(*encoder);
  Stage1Trainer t(encoder, prior, c.stage1, c.weights);
  auto loss = t.step(data);
  CHECK(loss.value() == doctest::Approx(loss.term("inv_ftr").raw + 0.0125 * loss.term("inv_reg").raw).epsilon(1e-5));
  t.step(data);
  CHECK(same(snapshot(*prior.generator), g0));
  CHECK(same(snapshot(*prior.discriminator), d0));
  CHECK(!same(snapshot(*encoder), e0));
  CHECK(!any_requires_grad(*prior.generator));

  auto state = through_disk(t.state(), "gcp_stage1_state.tensors");
  t.step(data);
  auto straight = snapshot(*encoder);
  auto prior2 = PriorGan::create(c.generator, c.prior_discriminator);
  auto encoder2 = make_encoder(c.encoder);
  Stage1Trainer t2(encoder2, prior2, c.stage1, c.weights);
  t2.load_state(state);
  t2.step(data);
  CHECK(same(snapshot(*encoder2), straight));

  set_requires_grad(*prior.generator, true);
  CHECK_THROWS_AS(t.step(data), TrainingError);
}

TEST_CASE("stage 2 trains only its own modules and resumes") {
  for (auto variant : {Variant::kFull, Variant::kNoPrior}) {
    auto c = tiny::config(variant);
    auto data = tiny::data(8);
    auto m = tiny::model(c);
    auto phi = make_feature_net(c.features);
    phi->eval();
    auto disc = make_patch_discriminator(c.patch);
    auto g0 = snapshot(*m.prior.generator);
    auto e0 = snapshot(*m.encoder);
    auto p0 = snapshot(*m.projector);
    auto c0 = snapshot(*m.colorizer);
    auto phi0 = snapshot(*phi);
    Stage2Trainer t(m, disc, phi, c.stage2, c.weights);
    auto r = t.step(data);
    CHECK(std::isfinite(r.colorizer.value()));
    CHECK(std::isfinite(r.discriminator.value()));
    if (variant == Variant::kNoPrior) {
      CHECK(r.colorizer.term("dom").weighted == 0.0);
      CHECK(r.colorizer.term("ctx").weighted == 0.0);
    } else {
      CHECK(r.colorizer.term("dom").raw > 0.0);
      CHECK(r.colorizer.term("ctx").raw > 0.0);
    }
    CHECK(same(snapshot(*m.prior.generator), g0));
    CHECK(same(snapshot(*m.encoder), e0));
    CHECK(same(snapshot(*phi), phi0));
    CHECK(!same(snapshot(*m.colorizer), c0));
    CHECK(same(snapshot(*m.projector), p0) == (variant == Variant::kNoPrior));

    auto state = through_disk(t.state(), "gcp_stage2_state.tensors");
    t.step(data);
    auto straight = snapshot(*m.colorizer);
    auto m2 = tiny::model(c);
    auto disc2 = make_patch_discriminator(c.patch);
    Stage2Trainer t2(m2, disc2, phi, c.stage2, c.weights);
    t2.load_state(state);
    t2.step(data);
    CHECK(same(snapshot(*m2.colorizer), straight));

    set_requires_grad(*m.encoder, true);
    CHECK_THROWS_AS(t.step(data), TrainingError);
  }
}

TEST_CASE("pipeline stage functions resume from their state file") {
  auto c = tiny::config();
  auto data = tiny::data(8);
  auto prior = PriorGan::create(c.generator, c.prior_discriminator);
  auto state = fs::temp_directory_path() / "gcp_stage1_resume" / "trainer_state.tensors";
  fs::remove_all(state.parent_path());
  c.stage1.linear_decay = false;
  c.stage1.steps = 3;
  auto straight = stage1_train(c, data, prior, {}, state);
  CHECK(straight.log.rows().size() == 3);
  c.stage1.steps = 2;
  stage1_train(c, data, prior, {}, state);
  c.stage1.steps = 3;
  c.resume = true;
  auto resumed = stage1_train(c, data, prior, {}, state);
  CHECK(resumed.log.rows().size() == 1);
  CHECK(same(snapshot(*resumed.encoder), snapshot(*straight.encoder)));
  fs::remove_all(state.parent_path());
}
