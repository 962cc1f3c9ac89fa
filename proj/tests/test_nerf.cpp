#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "repose/ad/optim.hpp"
#include "repose/body/condition_maps.hpp"
#include "repose/body/template_body.hpp"
#include "repose/nerf/loss.hpp"
#include "repose/nerf/render.hpp"
#include "tests_common.hpp"

using namespace repose;
using namespace repose::nerf;
using body::Vec3;

namespace {
NerfConfig toy_config() {
  NerfConfig cfg;
  cfg.c_f = 8;
  cfg.enc_mid = 4;
  cfg.grid_res = 8;
  cfg.grid_ch = 4;
  cfg.mlp_width = 16;
  cfg.s_train = 6;
  cfg.s_eval = 8;
  cfg.validate();
  return cfg;
}

struct Scene {
  body::MeshTemplate tpl = body::make_template();
  body::BodyParams pose = body::BodyParams::rest(body::kJointCount);
  body::Camera cam = tests::front_camera(32, 1.8);
  core::Image ref_image;

  Scene() {
    // reference "photo": palette render of the rest pose
    const auto posed = body::forward_lbs(tpl, pose);
    body::UVTexture tex(16);
    for (int i = 0; i < 16 * 16; ++i) {
      tex.valid.px[i] = 1.0;
      tex.color.px[3 * i] = (i % 16) / 16.0;
      tex.color.px[3 * i + 1] = 0.4;
      tex.color.px[3 * i + 2] = 1.0 - (i / 16) / 16.0;
    }
    ref_image = body::rasterize_condition_maps(tpl, posed, cam, tex).texture;
  }
};
}  // namespace

TEST_CASE("encoder: output shape, zero map at init, locality of response") {
  const NerfConfig cfg = toy_config();
  core::Rng rng(3);
  ad::ParamSet params;
  ReferenceEncoder enc(cfg, rng, params);

  core::Image img(32, 24, 3);
  ad::Tensor f = enc.forward(ReferenceEncoder::to_tensor(img));
  REQUIRE(f.shape() == ad::Shape{cfg.c_f, 8, 6});
  for (double v : f.value()) CHECK(v == 0.0);  // zero final conv

  // structural conformance: a a non-multiple-of-4 image is rejected
  CHECK_THROWS_AS(enc.forward(ad::Tensor::zeros({3, 30, 32})), std::invalid_argument);

  // make the head non-trivial, then probe locality: flipping one pixel must
  // leave distant feature columns untouched (receptive field is 7 pixels of
  // the stride-4 grid -> anything >= 3 texels away is out of reach)
  for (auto& [name, t] : params.items())
    if (name == "enc.w3")
      for (auto& v : t.node().value) v = 0.01;
  core::Image img2 = img;
  img2.px[(0 * 24 + 0) * 3] = 1.0;  // top-left pixel
  ad::Tensor fa = enc.forward(ReferenceEncoder::to_tensor(img));
  ad::Tensor fb = enc.forward(ReferenceEncoder::to_tensor(img2));
  bool near_changed = false;
  for (int c = 0; c < cfg.c_f; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 6; ++x) {
        const double da = std::fabs(fa.at((static_cast<int64_t>(c) * 8 + y) * 6 + x) -
                                    fb.at((static_cast<int64_t>(c) * 8 + y) * 6 + x));
        if (y <= 2 && x <= 2)
          near_changed = near_changed || da > 0;
        else
          CHECK(da == 0.0);
      }
  CHECK(near_changed);
}

TEST_CASE("mlp: zero heads give sigma=softplus(0) and color=0.5; sigma >= 0 always") {
  const NerfConfig cfg = toy_config();
  core::Rng rng(4);
  ad::ParamSet params;
  NerfMlp mlp(cfg, rng, params);

  const int n = 5;
  std::vector<double> x(n * 3), d(n * 3);
  core::Rng data_rng(5);
  for (int i = 0; i < n; ++i) {
    Vec3 dir(data_rng.normal(), data_rng.normal(), data_rng.normal());
    dir.normalize();
    for (int k = 0; k < 3; ++k) {
      x[3 * i + k] = data_rng.uniform(-1, 1);
      d[3 * i + k] = dir(k);
    }
  }
  ad::Tensor rho = ad::Tensor::zeros({n, cfg.d_rho()});
  const auto out = mlp.forward(x, d, rho);
  REQUIRE(out.sigma.shape() == ad::Shape{n, 1});
  REQUIRE(out.color.shape() == ad::Shape{n, 3});
  for (double s : out.sigma.value()) CHECK(s == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (double c : out.color.value()) CHECK(c == doctest::Approx(0.5).epsilon(1e-12));

  // non-negativity across random parameters
  for (int trial = 0; trial < 20; ++trial) {
    ad::ParamSet p2;
    core::Rng r2(100 + trial);
    NerfMlp m2(cfg, r2, p2);
    for (auto& [name, t] : p2.items())
      for (auto& v : t.node().value) v = r2.normal();
    std::vector<double> rho_v(static_cast<size_t>(n) * cfg.d_rho());
    for (auto& v : rho_v) v = r2.normal();
    const auto o = m2.forward(x, d, ad::Tensor::from_data({n, cfg.d_rho()}, std::move(rho_v)));
    for (double s : o.sigma.value()) {
      CHECK(s >= 0.0);
      CHECK(std::isfinite(s));
    }
    for (double c : o.color.value()) {
      CHECK(c >= 0.0);
      CHECK(c <= 1.0);
    }
  }

  CHECK_THROWS_AS(mlp.forward(x, std::vector<double>(n * 3, 0.7), rho), std::invalid_argument);
}

TEST_CASE("mlp: analytic gradient of sum(sigma) matches finite differences") {
  NerfConfig cfg = toy_config();
  cfg.mlp_width = 6;
  cfg.l_x = 2;
  cfg.l_d = 1;
  cfg.c_f = 3;
  cfg.grid_ch = 2;
  core::Rng rng(6);
  ad::ParamSet params;
  NerfMlp mlp(cfg, rng, params);
  // nudge the zero heads so their gradients are informative
  for (auto& [name, t] : params.items())
    for (auto& v : t.node().value) v += 0.05 * rng.normal();

  const int n = 4;
  std::vector<double> x(n * 3), d(n * 3);
  for (int i = 0; i < n; ++i) {
    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
    dir.normalize();
    for (int k = 0; k < 3; ++k) {
      x[3 * i + k] = rng.uniform(-1, 1);
      d[3 * i + k] = dir(k);
    }
  }
  std::vector<double> rho_v(static_cast<size_t>(n) * cfg.d_rho());
  for (auto& v : rho_v) v = rng.normal();
  const ad::Tensor rho = ad::Tensor::from_data({n, cfg.d_rho()}, rho_v);

  auto rebuild = [&] {
    const auto out = mlp.forward(x, d, rho);
    return ad::add(ad::sum_all(out.sigma), ad::mean_all(out.color));
  };
  const auto r = gradcheck::run(rebuild, params.items());
  CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("query_point_features: posed vertices project like the direct projection") {
  // With target == reference pose, a query at a posed surface vertex must
  // sample the reference map exactly at that vertex's direct projection.
  const Scene sc;
  NerfConfig cfg = toy_config();
  core::Rng rng(7);
  ad::ParamSet params;
  ReferenceEncoder enc(cfg, rng, params);
  FeatureGridNet gridnet(cfg, rng, params);

  // give the encoder a deterministic nonzero head so the map is informative
  for (auto& [name, t] : params.items())
    if (name == "enc.w3" || name == "enc.b3") {
      size_t i = 0;
      for (auto& v : t.node().value) v = 0.01 * (1 + (i++ % 7));
    }

  const RefContext ref = make_ref_context(cfg, enc, gridnet, sc.tpl, sc.ref_image, sc.cam,
                                          sc.pose);
  const auto posed = body::forward_lbs(sc.tpl, sc.pose);
  const body::VertexGrid grid(posed.vertices, body::kDefaultInverseRadius);

  std::vector<Vec3> queries;
  std::vector<int> qvi;
  for (int vi = 0; vi < sc.tpl.vertex_count(); vi += 61) {
    queries.emplace_back(posed.vertices.row(vi));
    qvi.push_back(vi);
  }
  const PointQueryResult q =
      query_point_features(ref, sc.tpl, sc.pose, posed, grid, queries);

  const int hf = ref.refmap.dim(1), wf = ref.refmap.dim(2);
  for (size_t i = 0; i < queries.size(); ++i) {
    REQUIRE(q.valid[i] == 1);
    // canonical recovery: the vertex is its own nearest neighbor
    const Vec3 expect = sc.tpl.vertices.row(qvi[i]);
    for (int k = 0; k < 3; ++k)
      CHECK(q.x_canonical[3 * i + k] == doctest::Approx(expect(k)).epsilon(1e-9));

    // oracle: direct projection + manual bilinear sample of channel 0
    const Eigen::Vector2d px = sc.cam.project(sc.cam.to_camera(queries[i]));
    const double fx = to_feature_coord(px.x(), cfg.enc_stride);
    const double fy = to_feature_coord(px.y(), cfg.enc_stride);
    const int x0 = static_cast<int>(std::floor(fx)), y0 = static_cast<int>(std::floor(fy));
    const double ax = fx - x0, ay = fy - y0;
    auto tap = [&](int yy, int xx) {
      if (yy < 0 || yy >= hf || xx < 0 || xx >= wf) return 0.0;
      return ref.refmap.at(static_cast<int64_t>(yy) * wf + xx);
    };
    const double expect_s = (1 - ay) * ((1 - ax) * tap(y0, x0) + ax * tap(y0, x0 + 1)) +
                            ay * ((1 - ax) * tap(y0 + 1, x0) + ax * tap(y0 + 1, x0 + 1));
    CHECK(q.rho.at(static_cast<int64_t>(i) * cfg.d_rho()) ==
          doctest::Approx(expect_s).epsilon(1e-9));
  }

  // far-away points are invalid with rho exactly zero
  const PointQueryResult far =
      query_point_features(ref, sc.tpl, sc.pose, posed, grid, {Vec3(9, 9, 9)});
  CHECK(far.valid[0] == 0);
  for (int k = 0; k < cfg.d_rho(); ++k) CHECK(far.rho.at(k) == 0.0);
  for (int k = 0; k < 3; ++k) CHECK(far.x_canonical[k] == 0.0);
}

TEST_CASE("ray samples: unit dirs, increasing depths, misses degenerate") {
  const Scene sc;
  core::Rng rng(8);
  std::vector<std::pair<int, int>> pixels;
  for (int y = 0; y < 32; y += 5)
    for (int x = 0; x < 32; x += 5) pixels.emplace_back(y, x);
  const auto posed = body::forward_lbs(sc.tpl, sc.pose);
  const RaySampleBatch batch = make_ray_samples(sc.cam, pixels, posed.vertices, 0.1, 9, rng);
  batch.validate();  // unit dirs + monotone depths checked inside
  int misses = 0, hits = 0;
  for (int i = 0; i < batch.n; ++i) {
    const double span = batch.far[i] - batch.ts[static_cast<size_t>(i) * batch.s];
    if (batch.far[i] == 1.0 && span < 1e-12)
      ++misses;  // degenerate: all samples collapse
    else
      ++hits;
  }
  CHECK(hits > 0);
  CHECK(misses > 0);  // corner pixels look past the body
}

TEST_CASE("render_view: zero-init field is constant fog, mask invariant holds") {
  const Scene sc;
  const NerfConfig cfg = toy_config();
  NerfModel model(cfg, 11);
  const RefContext ref = make_ref_context(cfg, model.encoder, model.gridnet, sc.tpl,
                                          sc.ref_image, sc.cam, sc.pose);
  const CoarseRender r = render_view(model, ref, sc.tpl, sc.pose, sc.cam, cfg.s_eval, 42);
  REQUIRE(r.rgb.h == 32);
  for (int i = 0; i < 32 * 32; ++i) {
    const double a = r.alpha.px[i];
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
    CHECK(r.mask.px[i] == (a > 0.5 ? 1.0 : 0.0));
    // untrained color head: rgb = alpha * 0.5 exactly
    for (int c = 0; c < 3; ++c)
      CHECK(r.rgb.px[3 * i + c] == doctest::Approx(0.5 * a).epsilon(1e-9));
  }
}

TEST_CASE("render_view: bit-identical across runs with one seed, differs across seeds") {
  const Scene sc;
  const NerfConfig cfg = toy_config();
  NerfModel model(cfg, 12);
  // randomize heads so renders carry signal
  core::Rng rng(13);
  for (auto& [name, t] : model.params.items())
    for (auto& v : t.node().value) v += 0.1 * rng.normal();
  const RefContext ref = make_ref_context(cfg, model.encoder, model.gridnet, sc.tpl,
                                          sc.ref_image, sc.cam, sc.pose);
  const CoarseRender a = render_view(model, ref, sc.tpl, sc.pose, sc.cam, cfg.s_eval, 7, 256);
  const CoarseRender b = render_view(model, ref, sc.tpl, sc.pose, sc.cam, cfg.s_eval, 7, 999);
  const CoarseRender c = render_view(model, ref, sc.tpl, sc.pose, sc.cam, cfg.s_eval, 8);
  CHECK(a.rgb.px == b.rgb.px);  // chunking must not affect the result
  CHECK(a.alpha.px == b.alpha.px);
  CHECK(a.depth.px == b.depth.px);
  CHECK(a.rgb.px != c.rgb.px);  // different stratification seed
}

TEST_CASE("nerf_loss: perfect render scores zero recon/ssim; BCE hits ln 2") {
  const int p = 16;
  core::Image gt(p, p, 3);
  core::Image mask(p, p, 1);
  core::Rng rng(14);
  for (int i = 0; i < p * p; ++i) {
    mask.px[i] = (i % 3 == 0) ? 1.0 : 0.0;
    for (int c = 0; c < 3; ++c) gt.px[3 * i + c] = rng.uniform();
  }
  ad::Tensor rgb = ad::Tensor::from_data({p * p, 3}, gt.px);
  // alpha == mask clipped into a safe BCE range
  std::vector<double> av(static_cast<size_t>(p) * p);
  for (int i = 0; i < p * p; ++i) av[static_cast<size_t>(i)] = mask.px[i] == 1.0 ? 1.0 : 0.0;
  ad::Tensor alpha = ad::Tensor::from_data({p * p}, av);
  const NerfLossOut perfect = nerf_loss(rgb, alpha, p, p, gt, mask, {0.1, 0.1, 0.0}, nullptr);
  CHECK(perfect.recon == 0.0);
  CHECK(perfect.ssim == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(perfect.total.item() ==
        doctest::Approx(perfect.recon + perfect.mask_bce + perfect.ssim).epsilon(1e-9));

  // alpha = 0.5 everywhere: BCE term = lambda * ln 2
  ad::Tensor half = ad::Tensor::full({p * p}, 0.5);
  const NerfLossOut halfed = nerf_loss(rgb, half, p, p, gt, mask, {0.1, 0.1, 0.0}, nullptr);
  CHECK(halfed.mask_bce == doctest::Approx(0.1 * std::log(2.0)).epsilon(1e-9));

  // out-of-range alpha is rejected
  ad::Tensor bad = ad::Tensor::full({p * p}, 1.5);
  CHECK_THROWS_AS(nerf_loss(rgb, bad, p, p, gt, mask, {0.1, 0.1, 0.0}, nullptr),
                  std::invalid_argument);

  // every component non-negative with the perceptual term on
  const PerceptualNet net;
  ad::Tensor off = ad::Tensor::from_data({p * p, 3}, std::vector<double>(p * p * 3, 0.25));
  const NerfLossOut l = nerf_loss(off, half, p, p, gt, mask, {0.1, 0.1, 0.1}, &net);
  CHECK(l.recon >= 0.0);
  CHECK(l.mask_bce >= 0.0);
  CHECK(l.ssim >= 0.0);
  CHECK(l.lpips >= 0.0);
  CHECK(l.total.item() ==
        doctest::Approx(l.recon + l.mask_bce + l.ssim + l.lpips).epsilon(1e-9));
}

TEST_CASE("nerf_loss: gradient w.r.t. rendered rgb matches finite differences") {
  const int p = 12;
  core::Image gt(p, p, 3), mask(p, p, 1);
  core::Rng rng(15);
  for (int i = 0; i < p * p; ++i) {
    mask.px[i] = i % 2 ? 1.0 : 0.0;
    for (int c = 0; c < 3; ++c) gt.px[3 * i + c] = rng.uniform();
  }
  std::vector<double> pv(static_cast<size_t>(p) * p * 3);
  for (auto& v : pv) v = rng.uniform(0.2, 0.8);
  ad::Tensor rgb = ad::Tensor::from_data({p * p, 3}, std::move(pv), true);
  std::vector<double> av(static_cast<size_t>(p) * p);
  for (auto& v : av) v = rng.uniform(0.1, 0.9);
  ad::Tensor alpha = ad::Tensor::from_data({p * p}, std::move(av), true);

  auto rebuild = [&] {
    return nerf_loss(rgb, alpha, p, p, gt, mask, {0.1, 0.1, 0.0}, nullptr).total;
  };
  const auto r = gradcheck::run(rebuild, {{"rgb", rgb}, {"alpha", alpha}});
  CHECK(r.max_rel_err < 1e-3);
}

TEST_CASE("ssim_ad: identical images score 1, corrupted images score lower") {
  core::Rng rng(16);
  std::vector<double> v(static_cast<size_t>(3) * 16 * 16);
  for (auto& x : v) x = rng.uniform();
  ad::Tensor a = ad::Tensor::from_data({1, 3, 16, 16}, v);
  CHECK(ssim_ad(a, a).item() == doctest::Approx(1.0).epsilon(1e-12));
  auto w = v;
  for (size_t i = 0; i < w.size(); i += 2) w[i] = 1.0 - w[i];
  ad::Tensor b = ad::Tensor::from_data({1, 3, 16, 16}, std::move(w));
  const double s = ssim_ad(a, b).item();
  CHECK(s < 0.9);
  CHECK(s >= -1.0);
}

TEST_CASE("normal_from_depth: a flat depth wall faces the camera") {
  CoarseRender r;
  r.depth = core::Image(9, 9, 1, 2.0);
  r.mask = core::Image(9, 9, 1, 1.0);
  r.alpha = core::Image(9, 9, 1, 1.0);
  r.rgb = core::Image(9, 9, 3);
  body::Camera cam;
  cam.width = cam.height = 9;
  cam.fx = cam.fy = 9;
  cam.cx = cam.cy = 4.5;
  cam.R = Eigen::Vector3d(1, -1, -1).asDiagonal();
  cam.t = -cam.R * Vec3(0, 0, 2);
  cam.validate();
  const core::Image n = normal_from_depth(r, cam);
  // interior pixels: constant camera-space depth -> normal straight at the
  // camera -> encoded (0.5, 0.5, 1.0)
  const int64_t center = (4 * 9 + 4) * 3;
  CHECK(n.px[center] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(n.px[center + 1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(n.px[center + 2] == doctest::Approx(1.0).epsilon(1e-9));
  // border pixels lack a full neighborhood -> black
  CHECK(n.px[0] == 0.0);
}
