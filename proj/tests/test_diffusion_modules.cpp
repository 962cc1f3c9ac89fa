#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "repose/ad/ops.hpp"
#include "repose/core/random.hpp"
#include "repose/diffusion/attention.hpp"
#include "repose/diffusion/cond.hpp"
#include "repose/diffusion/embed.hpp"
#include "repose/diffusion/unet.hpp"

using namespace repose;
using diffusion::AttentionBlock;
using diffusion::AttnCounters;

namespace {

ad::Tensor randt(core::Rng& rng, const ad::Shape& shape, double amp = 1.0) {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-amp, amp);
  return ad::Tensor::from_data(shape, std::move(v));
}

// Attention layers start as exact identities; give the output projection
// real weights when a test needs the layer to actually do something.
void activate(AttentionBlock& a, core::Rng& rng) {
  for (auto& w : a.wo.node().value) w = rng.uniform(-0.5, 0.5);
}

bool bit_equal(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a.at(i) != b.at(i)) return false;
  return true;
}

double max_abs_diff(const ad::Tensor& a, const ad::Tensor& b) {
  double m = 0;
  for (int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.at(i) - b.at(i)));
  return m;
}

diffusion::UNetConfig tiny_unet_config() {
  diffusion::UNetConfig c;
  c.base = 8;
  c.mults = {1, 2, 4};
  c.n_views = 2;
  c.mv_stride = 2;
  c.groups = 4;
  c.latent_hw = 4;
  return c;
}

}  // namespace

TEST_CASE("sinusoidal embedding has the transformer layout") {
  const auto e0 = diffusion::sinusoidal_embedding(0, 8);
  REQUIRE(e0.size() == 8);
  for (int i = 0; i < 4; ++i) {
    CHECK(e0[i] == 0.0);        // sin(0)
    CHECK(e0[4 + i] == 1.0);    // cos(0)
  }
  const auto e5 = diffusion::sinusoidal_embedding(5, 64);
  for (int i = 0; i < 32; ++i) {
    const double freq = std::pow(10000.0, -i / 32.0);
    CHECK(e5[i] == doctest::Approx(std::sin(5 * freq)).epsilon(1e-12));
    CHECK(e5[32 + i] == doctest::Approx(std::cos(5 * freq)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(diffusion::sinusoidal_embedding(1, 7), std::invalid_argument);
  CHECK_THROWS_AS(diffusion::sinusoidal_embedding(1, 0), std::invalid_argument);
}

TEST_CASE("time embedding is 1024-wide, deterministic, and t-sensitive") {
  ad::ParamSet params;
  core::Rng rng(31);
  const diffusion::TimeEmbed emb(rng, params);

  const ad::Tensor f = emb.forward(17);
  REQUIRE(f.ndim() == 2);
  CHECK(f.dim(0) == 1);
  CHECK(f.dim(1) == diffusion::kEmbedDim);
  CHECK(bit_equal(f, emb.forward(17)));

  // Distinct timesteps must not collide (100 random draws against t=0).
  const ad::Tensor base = emb.forward(0);
  core::Rng trng(32);
  for (int i = 0; i < 100; ++i) {
    const int t = 1 + static_cast<int>(trng.uniform_int(10000));
    CHECK(max_abs_diff(emb.forward(t), base) > 1e-9);
  }
  CHECK_THROWS_AS(emb.forward(-1), std::invalid_argument);
}

TEST_CASE("camera embedding flattens 12 inputs to 1024 and rejects bad rotations") {
  ad::ParamSet params;
  core::Rng rng(33);
  const diffusion::CameraEmbed emb(false, rng, params);
  CHECK(emb.input_dim() == 12);
  CHECK(params.get("cam.w1").dim(1) == 12);

  Eigen::Matrix3d R;
  R = Eigen::AngleAxisd(0.4, Eigen::Vector3d::UnitY());
  const ad::Tensor f = emb.forward(R, Eigen::Vector3d(0.1, -0.2, 2.0));
  REQUIRE(f.ndim() == 2);
  CHECK(f.dim(0) == 1);
  CHECK(f.dim(1) == diffusion::kEmbedDim);

  // Same rotation, different translation -> different embedding, 100 draws.
  core::Rng trng(34);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d t(trng.uniform(-3, 3), trng.uniform(-3, 3), trng.uniform(-3, 3));
    CHECK(max_abs_diff(emb.forward(R, t), f) > 1e-9);
  }

  Eigen::Matrix3d bad = R;
  bad(0, 0) += 0.01;
  CHECK_THROWS_AS(emb.forward(bad, Eigen::Vector3d::Zero()), std::invalid_argument);

  // The rotation-only ablation ignores translation entirely.
  ad::ParamSet params9;
  core::Rng rng9(35);
  const diffusion::CameraEmbed emb9(true, rng9, params9);
  CHECK(emb9.input_dim() == 9);
  CHECK(params9.get("cam.w1").dim(1) == 9);
  CHECK(bit_equal(emb9.forward(R, Eigen::Vector3d(1, 2, 3)),
                  emb9.forward(R, Eigen::Vector3d(-4, 0, 9))));
}

TEST_CASE("combine_embeddings is an elementwise sum") {
  core::Rng rng(36);
  const ad::Tensor a = randt(rng, {1, diffusion::kEmbedDim});
  const ad::Tensor b = randt(rng, {1, diffusion::kEmbedDim});
  const ad::Tensor zero = ad::Tensor::zeros({1, diffusion::kEmbedDim});

  CHECK(bit_equal(diffusion::combine_embeddings(zero, b), b));
  CHECK(bit_equal(diffusion::combine_embeddings(a, b), diffusion::combine_embeddings(b, a)));

  const ad::Tensor twice = ad::mul_scalar(a, 2.0);
  CHECK(max_abs_diff(diffusion::combine_embeddings(twice, zero),
                     ad::mul_scalar(diffusion::combine_embeddings(a, zero), 2.0)) < 1e-12);

  CHECK_THROWS_AS(diffusion::combine_embeddings(a, randt(rng, {1, 8})), std::invalid_argument);
}

TEST_CASE("every attention op is an exact identity at initialization") {
  ad::ParamSet params;
  core::Rng rng(41);
  AttentionBlock a = diffusion::make_attention("a", 8, 4, rng, params);
  CHECK(a.channels() == 8);

  const ad::Tensor x = randt(rng, {3, 8, 4, 4});
  const ad::Tensor ref = randt(rng, {8, 4, 4});
  AttnCounters counters;

  CHECK(bit_equal(diffusion::spatial_self_attention(a, x), x));
  CHECK(bit_equal(diffusion::view_1d_attention(a, x, &counters), x));
  CHECK(bit_equal(diffusion::multiview_attention(a, x, 2, &counters), x));
  CHECK(bit_equal(diffusion::reference_attention(a, x, ref, &counters), x));
  CHECK(counters.view1d == 1);
  CHECK(counters.multiview == 1);
  CHECK(counters.reference == 1);
  counters.reset();
  CHECK(counters.view1d == 0);

  CHECK_THROWS_AS(diffusion::make_attention("b", 10, 4, rng, params), std::invalid_argument);
}

TEST_CASE("1D view attention is strictly pixel-local and permutation-equivariant") {
  ad::ParamSet params;
  core::Rng rng(42);
  AttentionBlock a = diffusion::make_attention("a", 8, 4, rng, params);
  activate(a, rng);

  const int V = 3, C = 8, H = 4, W = 4;
  const ad::Tensor x = randt(rng, {V, C, H, W});
  const ad::Tensor y = diffusion::view_1d_attention(a, x, nullptr);
  REQUIRE(y.shape() == x.shape());
  CHECK(max_abs_diff(y, x) > 1e-6);  // the layer actually does something

  // Perturb one pixel of one view; only that pixel column may move.
  ad::Tensor x2 = ad::Tensor::from_data(x.shape(), x.value());
  const int py = 2, px = 1;
  x2.node().value[((1 * C + 3) * H + py) * W + px] += 0.25;
  const ad::Tensor y2 = diffusion::view_1d_attention(a, x2, nullptr);
  for (int v = 0; v < V; ++v)
    for (int c = 0; c < C; ++c)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          const int64_t i = ((static_cast<int64_t>(v) * C + c) * H + yy) * W + xx;
          if (yy == py && xx == px) continue;
          CHECK(y2.at(i) == y.at(i));
        }

  // Swapping two views swaps the outputs identically.
  const ad::Tensor xa = ad::slice(x, 0, 0, 1), xb = ad::slice(x, 0, 1, 1),
                   xc = ad::slice(x, 0, 2, 1);
  const ad::Tensor perm = ad::concat({xc, xb, xa}, 0);
  const ad::Tensor yp = diffusion::view_1d_attention(a, perm, nullptr);
  CHECK(max_abs_diff(ad::slice(yp, 0, 0, 1), ad::slice(y, 0, 2, 1)) < 1e-6);
  CHECK(max_abs_diff(ad::slice(yp, 0, 1, 1), ad::slice(y, 0, 1, 1)) < 1e-6);
  CHECK(max_abs_diff(ad::slice(yp, 0, 2, 1), ad::slice(y, 0, 0, 1)) < 1e-6);
}

TEST_CASE("sparse multi-view attention selects every stride-th view") {
  ad::ParamSet params;
  core::Rng rng(43);
  AttentionBlock a = diffusion::make_attention("a", 8, 4, rng, params);
  activate(a, rng);

  const ad::Tensor x = randt(rng, {3, 8, 2, 2});

  // stride beyond n_views leaves only view 0 selected: that view reduces to
  // plain spatial self-attention, the rest pass through untouched.
  const ad::Tensor y = diffusion::multiview_attention(a, x, 5, nullptr);
  const ad::Tensor solo = diffusion::spatial_self_attention(a, ad::slice(x, 0, 0, 1));
  CHECK(max_abs_diff(ad::slice(y, 0, 0, 1), solo) < 1e-12);
  CHECK(bit_equal(ad::slice(y, 0, 1, 1), ad::slice(x, 0, 1, 1)));
  CHECK(bit_equal(ad::slice(y, 0, 2, 1), ad::slice(x, 0, 2, 1)));

  // stride 2 over 3 views: views 0 and 2 join, view 1 passes through.
  const ad::Tensor y2 = diffusion::multiview_attention(a, x, 2, nullptr);
  CHECK(bit_equal(ad::slice(y2, 0, 1, 1), ad::slice(x, 0, 1, 1)));
  CHECK(max_abs_diff(ad::slice(y2, 0, 0, 1), ad::slice(x, 0, 0, 1)) > 1e-9);
  CHECK(max_abs_diff(ad::slice(y2, 0, 2, 1), ad::slice(x, 0, 2, 1)) > 1e-9);

  CHECK_THROWS_AS(diffusion::multiview_attention(a, x, 0, nullptr), std::invalid_argument);
}

TEST_CASE("attention rows are a softmax: every row sums to 1") {
  ad::ParamSet params;
  core::Rng rng(44);
  AttentionBlock a = diffusion::make_attention("a", 8, 4, rng, params);

  const ad::Tensor tokens = randt(rng, {10, 8}, 2.0);
  ad::Tensor attn;
  diffusion::attend_rows(a, tokens, &attn);
  REQUIRE(attn.ndim() == 2);
  REQUIRE(attn.dim(0) == 10);
  REQUIRE(attn.dim(1) == 10);
  for (int r = 0; r < 10; ++r) {
    double s = 0;
    for (int c = 0; c < 10; ++c) {
      const double w = attn.at(r * 10 + c);
      CHECK(w >= 0.0);
      s += w;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("reference attention duplicates one reference for every view") {
  ad::ParamSet params;
  core::Rng rng(45);
  AttentionBlock a = diffusion::make_attention("a", 8, 4, rng, params);
  activate(a, rng);

  // Copy-symmetry: identical main content in every view plus one shared
  // reference map must produce identical per-view outputs.
  const ad::Tensor one = randt(rng, {1, 8, 3, 3});
  const ad::Tensor x = ad::concat({one, one, one}, 0);
  const ad::Tensor ref = randt(rng, {8, 3, 3});
  const ad::Tensor y = diffusion::reference_attention(a, x, ref, nullptr);
  REQUIRE(y.shape() == x.shape());
  CHECK(max_abs_diff(ad::slice(y, 0, 0, 1), ad::slice(y, 0, 1, 1)) < 1e-6);
  CHECK(max_abs_diff(ad::slice(y, 0, 0, 1), ad::slice(y, 0, 2, 1)) < 1e-6);
  CHECK(max_abs_diff(y, x) > 1e-6);  // and the reference actually contributes

  // Self-reference keeps shape and stays finite.
  const ad::Tensor self_ref = ad::reshape(one, {8, 3, 3});
  const ad::Tensor ys = diffusion::reference_attention(a, one, self_ref, nullptr);
  REQUIRE(ys.shape() == one.shape());
  for (int64_t i = 0; i < ys.size(); ++i) CHECK(std::isfinite(ys.at(i)));

  CHECK_THROWS_AS(diffusion::reference_attention(a, x, randt(rng, {8, 2, 3}), nullptr),
                  std::invalid_argument);
}

TEST_CASE("conditioning encoder matches the pinned channel progression") {
  const std::vector<int> want = {16, 16, 32, 32, 96, 96, 256, 320};
  CHECK(diffusion::CondEncoder::channel_sequence() == want);

  ad::ParamSet params;
  core::Rng rng(51);
  const diffusion::CondEncoder enc("enc_rgb", rng, params);

  // Parameter shapes walk the progression with 3x3 kernels throughout.
  int in = 4;
  for (size_t i = 0; i < want.size(); ++i) {
    const ad::Tensor& w = params.get("enc_rgb.c" + std::to_string(i + 1) + ".w");
    REQUIRE(w.ndim() == 4);
    CHECK(w.dim(0) == want[i]);
    CHECK(w.dim(1) == in);
    CHECK(w.dim(2) == 3);
    CHECK(w.dim(3) == 3);
    in = want[i];
  }

  // Zero-initialized final conv: a fresh encoder contributes exactly nothing,
  // and stride-1 padding-1 keeps the spatial dims.
  const ad::Tensor latent = randt(rng, {2, 4, 8, 8});
  const ad::Tensor f = enc.forward(latent);
  REQUIRE(f.ndim() == 4);
  CHECK(f.dim(0) == 2);
  CHECK(f.dim(1) == diffusion::kCondChannels);
  CHECK(f.dim(2) == 8);
  CHECK(f.dim(3) == 8);
  for (int64_t i = 0; i < f.size(); ++i) CHECK(f.at(i) == 0.0);

  CHECK_THROWS_AS(enc.forward(randt(rng, {2, 3, 8, 8})), std::invalid_argument);
}

TEST_CASE("MLGF fuses three zero-initialized branches additively") {
  CHECK(diffusion::Mlgf::kBranches == 3);

  ad::ParamSet params;
  core::Rng rng(52);
  const diffusion::Mlgf mlgf(4, rng, params);
  CHECK(mlgf.image_stride() == 4);

  const ad::Tensor tex = randt(rng, {2, 3, 8, 8});
  const ad::Tensor nrm = randt(rng, {2, 3, 8, 8});
  const ad::Tensor sem = randt(rng, {2, 3, 8, 8});

  // Fresh model: every branch ends in a zero conv, so F_geo == 0 exactly.
  const ad::Tensor f0 = mlgf.forward(tex, nrm, sem, diffusion::MlgfInputs::full);
  REQUIRE(f0.ndim() == 4);
  CHECK(f0.dim(0) == 2);
  CHECK(f0.dim(1) == diffusion::kCondChannels);
  CHECK(f0.dim(2) == 2);  // 8 / stride 4
  CHECK(f0.dim(3) == 2);
  for (int64_t i = 0; i < f0.size(); ++i) CHECK(f0.at(i) == 0.0);

  // Wake the zero terminals up, then verify Eq-style additivity:
  // F_geo(full) - F_geo(without texture) == texture branch alone.
  core::Rng wrng(53);
  for (const char* name : {"mlgf.tex.zero.w", "mlgf.nrm.zero.w", "mlgf.sem.zero.w"})
    for (auto& v : params.get(name).node().value) v = wrng.uniform(-0.1, 0.1);

  const ad::Tensor full = mlgf.forward(tex, nrm, sem, diffusion::MlgfInputs::full);
  const ad::Tensor no_tex = mlgf.forward(tex, nrm, sem, diffusion::MlgfInputs::no_texture);
  const ad::Tensor tex_only = mlgf.branch(0, tex);
  CHECK(max_abs_diff(ad::sub(full, no_tex), tex_only) < 1e-6);
  CHECK(max_abs_diff(full, no_tex) > 1e-9);

  // The other ablation drops normal and semantic together.
  const ad::Tensor tex_branch_sum =
      mlgf.forward(tex, nrm, sem, diffusion::MlgfInputs::no_normal_semantic);
  CHECK(max_abs_diff(tex_branch_sum, tex_only) < 1e-12);

  CHECK_THROWS_AS(mlgf.forward(ad::Tensor(), nrm, sem, diffusion::MlgfInputs::full),
                  std::invalid_argument);
  CHECK_THROWS_AS(mlgf.forward(tex, nrm, randt(rng, {2, 3, 6, 6}), diffusion::MlgfInputs::full),
                  std::invalid_argument);
  CHECK_THROWS_AS(diffusion::Mlgf(3, rng, params), std::invalid_argument);
}

TEST_CASE("UNet output matches input latent shapes and validates its config") {
  diffusion::UNetConfig cfg = tiny_unet_config();
  cfg.validate();
  CHECK(cfg.ch(0) == 8);
  CHECK(cfg.ch(1) == 16);
  CHECK(cfg.ch(2) == 32);
  CHECK(cfg.attention_sizes() == std::vector<int>{2, 1});

  diffusion::UNetConfig bad = cfg;
  bad.mults = {1, 2};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.latent_hw = 6;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.attn_res = {3};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.groups = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ad::ParamSet params;
  core::Rng rng(61);
  const diffusion::DenoiserUNet unet(cfg, rng, params);
  CHECK(unet.n_ref_sites() == 2);

  ad::ParamSet rparams;
  core::Rng rrng(62);
  const diffusion::RefNet refnet(cfg, rrng, rparams);

  core::Rng drng(63);
  const ad::Tensor x_rgb = randt(drng, {2, 4, 4, 4});
  const ad::Tensor x_nrm = randt(drng, {2, 4, 4, 4});
  diffusion::ConditioningBundle bundle;
  bundle.emb = randt(drng, {2, diffusion::kEmbedDim}, 0.2);
  bundle.f_geo = ad::Tensor::zeros({2, diffusion::kCondChannels, 4, 4});
  bundle.ref_cache = refnet.forward(randt(drng, {1, 4, 4, 4}),
                                    randt(drng, {1, diffusion::kEmbedDim}, 0.2));

  const auto [v_rgb, v_nrm] = unet.forward(x_rgb, x_nrm, bundle, true, nullptr);
  CHECK(v_rgb.shape() == x_rgb.shape());
  CHECK(v_nrm.shape() == x_nrm.shape());

  // Swapping the domain latents moves both outputs: the branches share no
  // weights.
  const auto [s_rgb, s_nrm] = unet.forward(x_nrm, x_rgb, bundle, true, nullptr);
  CHECK(max_abs_diff(s_rgb, v_rgb) > 1e-9);
  CHECK(max_abs_diff(s_nrm, v_nrm) > 1e-9);

  // Missing conditioning is an error, not a silent zero.
  diffusion::ConditioningBundle incomplete = bundle;
  incomplete.f_geo = ad::Tensor();
  CHECK_THROWS_AS(unet.forward(x_rgb, x_nrm, incomplete, true, nullptr), std::invalid_argument);
  incomplete = bundle;
  incomplete.emb = ad::Tensor();
  CHECK_THROWS_AS(unet.forward(x_rgb, x_nrm, incomplete, true, nullptr), std::invalid_argument);
  incomplete = bundle;
  incomplete.ref_cache.pop_back();
  CHECK_THROWS_AS(unet.forward(x_rgb, x_nrm, incomplete, true, nullptr), std::invalid_argument);
  CHECK_THROWS_AS(unet.forward(x_rgb, ad::Tensor(), bundle, true, nullptr),
                  std::invalid_argument);
}

TEST_CASE("zero-initialized conditioning terminals make the UNet ignore real features") {
  const diffusion::UNetConfig cfg = tiny_unet_config();
  ad::ParamSet params;
  core::Rng rng(64);
  // Build the full conditioning stack fresh: every terminal is zero-init.
  const diffusion::CondEncoder enc_rgb("enc_rgb", rng, params);
  const diffusion::CondEncoder enc_nrm("enc_nrm", rng, params);
  const diffusion::Mlgf mlgf(4, rng, params);
  const diffusion::DenoiserUNet unet(cfg, rng, params);
  const diffusion::RefNet refnet(cfg, rng, params);

  core::Rng drng(65);
  const ad::Tensor x_rgb = randt(drng, {2, 4, 4, 4});
  const ad::Tensor x_nrm = randt(drng, {2, 4, 4, 4});
  const ad::Tensor emb = randt(drng, {2, diffusion::kEmbedDim}, 0.2);
  const auto ref_cache = refnet.forward(randt(drng, {1, 4, 4, 4}),
                                        randt(drng, {1, diffusion::kEmbedDim}, 0.2));

  diffusion::ConditioningBundle real;
  real.emb = emb;
  real.f_rgb = enc_rgb.forward(randt(drng, {2, 4, 4, 4}));
  real.f_normal = enc_nrm.forward(randt(drng, {2, 4, 4, 4}));
  real.f_geo = mlgf.forward(randt(drng, {2, 3, 16, 16}), randt(drng, {2, 3, 16, 16}),
                            randt(drng, {2, 3, 16, 16}), diffusion::MlgfInputs::full);
  real.ref_cache = ref_cache;

  diffusion::ConditioningBundle zeroed;
  zeroed.emb = emb;
  zeroed.f_geo = ad::Tensor::zeros({2, diffusion::kCondChannels, 4, 4});
  zeroed.ref_cache = ref_cache;

  const auto [r1, n1] = unet.forward(x_rgb, x_nrm, real, true, nullptr);
  const auto [r2, n2] = unet.forward(x_rgb, x_nrm, zeroed, true, nullptr);
  CHECK(bit_equal(r1, r2));
  CHECK(bit_equal(n1, n2));

  // At init the view-attention layers are identities too: enabling them
  // changes nothing until training moves their output projections.
  const auto [r3, n3] = unet.forward(x_rgb, x_nrm, real, false, nullptr);
  CHECK(bit_equal(r1, r3));
  CHECK(bit_equal(n1, n3));
}

TEST_CASE("attention counters prove which paths a forward pass took") {
  const diffusion::UNetConfig cfg = tiny_unet_config();
  ad::ParamSet params;
  core::Rng rng(66);
  const diffusion::DenoiserUNet unet(cfg, rng, params);
  const diffusion::RefNet refnet(cfg, rng, params);

  core::Rng drng(67);
  const ad::Tensor x_rgb = randt(drng, {2, 4, 4, 4});
  const ad::Tensor x_nrm = randt(drng, {2, 4, 4, 4});
  diffusion::ConditioningBundle bundle;
  bundle.emb = randt(drng, {2, diffusion::kEmbedDim}, 0.2);
  bundle.f_geo = ad::Tensor::zeros({2, diffusion::kCondChannels, 4, 4});
  bundle.ref_cache = refnet.forward(randt(drng, {1, 4, 4, 4}),
                                    randt(drng, {1, diffusion::kEmbedDim}, 0.2));

  AttnCounters counters;
  unet.forward(x_rgb, x_nrm, bundle, false, &counters);
  CHECK(counters.view1d == 0);
  CHECK(counters.multiview == 0);
  CHECK(counters.reference == 2);  // one per attention site

  counters.reset();
  unet.forward(x_rgb, x_nrm, bundle, true, &counters);
  CHECK(counters.view1d == 2);
  CHECK(counters.multiview == 2);
  CHECK(counters.reference == 2);
}

TEST_CASE("concat conditioning widens the input convs to 8 channels") {
  diffusion::UNetConfig cfg = tiny_unet_config();
  cfg.concat_strategy = true;

  ad::ParamSet params;
  core::Rng rng(68);
  const diffusion::DenoiserUNet unet(cfg, rng, params);
  CHECK(params.get("unet.rgb.in.w").dim(1) == 8);
  CHECK(params.get("unet.nrm.in.w").dim(1) == 8);

  ad::ParamSet rparams;
  core::Rng rrng(69);
  const diffusion::RefNet refnet(cfg, rrng, rparams);

  core::Rng drng(70);
  const ad::Tensor x_rgb = randt(drng, {2, 4, 4, 4});
  const ad::Tensor x_nrm = randt(drng, {2, 4, 4, 4});
  diffusion::ConditioningBundle bundle;
  bundle.emb = randt(drng, {2, diffusion::kEmbedDim}, 0.2);
  bundle.f_geo = ad::Tensor::zeros({2, diffusion::kCondChannels, 4, 4});
  bundle.ref_cache = refnet.forward(randt(drng, {1, 4, 4, 4}),
                                    randt(drng, {1, diffusion::kEmbedDim}, 0.2));

  // The concat path refuses to run without the coarse latents...
  CHECK_THROWS_AS(unet.forward(x_rgb, x_nrm, bundle, true, nullptr), std::invalid_argument);

  // ...and runs once they are provided.
  bundle.cond_rgb = randt(drng, {2, 4, 4, 4});
  bundle.cond_normal = randt(drng, {2, 4, 4, 4});
  const auto [v_rgb, v_nrm] = unet.forward(x_rgb, x_nrm, bundle, true, nullptr);
  CHECK(v_rgb.shape() == x_rgb.shape());
  CHECK(v_nrm.shape() == x_nrm.shape());

  // Standard strategy keeps the 4-channel input convs.
  ad::ParamSet params4;
  core::Rng rng4(71);
  const diffusion::DenoiserUNet narrow(tiny_unet_config(), rng4, params4);
  CHECK(params4.get("unet.rgb.in.w").dim(1) == 4);
}

TEST_CASE("reference network mirrors the UNet attention sites") {
  const diffusion::UNetConfig cfg = tiny_unet_config();
  ad::ParamSet params;
  core::Rng rng(72);
  const diffusion::RefNet refnet(cfg, rng, params);

  core::Rng drng(73);
  const ad::Tensor ref = randt(drng, {1, 4, 4, 4});
  const ad::Tensor f_time = randt(drng, {1, diffusion::kEmbedDim}, 0.2);

  const auto cache = refnet.forward(ref, f_time);
  REQUIRE(cache.size() == 2);  // one map per reference-attention site

  // Spatial dims halve at each downsampling stage; channels follow the trunk.
  CHECK(cache[0].shape() == ad::Shape{cfg.ch(1), 2, 2});
  CHECK(cache[1].shape() == ad::Shape{cfg.ch(2), 1, 1});

  // Deterministic: two identical calls agree bit for bit.
  const auto again = refnet.forward(ref, f_time);
  CHECK(bit_equal(cache[0], again[0]));
  CHECK(bit_equal(cache[1], again[1]));

  CHECK_THROWS_AS(refnet.forward(randt(drng, {2, 4, 4, 4}), f_time), std::invalid_argument);

  // Restricting attention to one resolution shrinks the mirror to one site.
  diffusion::UNetConfig one_site = cfg;
  one_site.attn_res = {2};
  ad::ParamSet p1;
  core::Rng r1(74);
  const diffusion::RefNet small(one_site, r1, p1);
  CHECK(small.forward(ref, f_time).size() == 1);

  ad::ParamSet p2;
  core::Rng r2(75);
  const diffusion::DenoiserUNet unet_one(one_site, r2, p2);
  CHECK(unet_one.n_ref_sites() == 1);
}
