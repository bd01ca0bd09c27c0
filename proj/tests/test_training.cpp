#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "rdsc/training.hpp"

using namespace rdsc;

namespace {

ModelConfig small_config(std::size_t vocab) {
  ModelConfig c;
  c.vocab = vocab;
  c.d_model = 16;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.ffn = 32;
  c.k_sym = 4;
  c.max_len = 32;
  c.d_det = 8;
  c.d_mi = 8;
  return c;
}

struct Fixture {
  std::vector<std::string> lines;
  Vocabulary vocab;
  VerbLexicon lexicon = VerbLexicon::bundled();
  std::vector<TokenSequence> clean;

  explicit Fixture(std::size_t n) {
    lines = load_corpus(std::filesystem::path(RDSC_DATA_DIR) / "desk_corpus.txt", n);
    vocab = build_vocab(lines, 1, 4000);
    for (const auto& l : lines) clean.push_back(encode(l, vocab));
  }
};

double max_abs_diff(const ModelParams& a, const ModelParams& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.entries().size(); ++i) {
    auto x = a.entries()[i].second.data(), y = b.entries()[i].second.data();
    for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, std::abs(x[k] - y[k]));
  }
  return m;
}

}  // namespace

TEST_CASE("cross entropy") {
  const std::size_t v = 6;
  std::vector<std::size_t> targets{1, 4, kPad, 2};
  SUBCASE("perfect logits") {
    std::vector<double> x(4 * v, -50.0);
    for (std::size_t r = 0; r < 4; ++r) x[r * v + targets[r]] = 50.0;
    CHECK(cross_entropy_loss(Tensor::from({2, 2, v}, x), targets).item() < 1e-12);
  }
  SUBCASE("uniform logits") {
    CHECK(cross_entropy_loss(Tensor::zeros({2, 2, v}), targets).item() == doctest::Approx(std::log(6.0)).epsilon(1e-14));
  }
  SUBCASE("gradient") {
    std::mt19937_64 rng(1);
    auto x = Tensor::randn({2, 2, v}, rng, 2.0);
    CHECK(finite_diff_check([&](const Tensor& t) { return cross_entropy_loss(t, targets); }, x) < 1e-6);
  }
  CHECK_THROWS_AS(cross_entropy_loss(Tensor::zeros({1, 2, v}), std::vector<std::size_t>{kPad, kPad}), ShapeError);
}

TEST_CASE("detection BCE") {
  const std::vector<double> labels{1, 0, 0, 1}, mask{1, 1, 1, 0};
  CHECK(detection_bce(Tensor::from({2, 2}, {1, 0, 0, 1}), labels, mask).item() == doctest::Approx(1e-7).epsilon(1e-3));
  CHECK(detection_bce(Tensor::full({2, 2}, 0.5), labels, mask).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  std::mt19937_64 rng(2);
  auto p = Tensor::uniform({2, 2}, rng, 0.4) + 0.5;
  CHECK(finite_diff_check([&](const Tensor& t) { return detection_bce(t, labels, mask); }, p) < 1e-6);
  CHECK_THROWS_AS(detection_bce(p, std::vector<double>{1, 0}, mask), ShapeError);
}

TEST_CASE("MINE bound") {
  std::mt19937_64 rng(3);
  auto x = Tensor::randn({16, 3}, rng, 1.0);
  auto y = Tensor::randn({16, 3}, rng, 1.0);
  auto est = MiEstimator::create(6, 8, 4);
  SUBCASE("zero statistics network gives zero") {
    MiEstimator zero{Tensor::zeros({6, 8}), Tensor::zeros({8}), Tensor::zeros({8, 1}), Tensor::zeros({1})};
    std::mt19937_64 r(5);
    CHECK(mine_mi_lower_bound(zero, x, y, r).item() == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("gradient w.r.t. the estimator and the frames") {
    auto xs = x.detach().set_requires_grad(true);
    auto ys = y.detach().set_requires_grad(true);
    for (auto& t : est.tensors())
      for (auto& v : t.mutable_data()) v += 0.05;  // off the ReLU kinks
    auto f = [&] {
      std::mt19937_64 r(6);
      return mine_mi_lower_bound(est, xs, ys, r);
    };
    std::vector<Tensor> ps = est.tensors();
    ps.push_back(xs);
    ps.push_back(ys);
    CHECK(finite_diff_check_params(f, ps) < 1e-4);
  }
  std::mt19937_64 r(7);
  CHECK_THROWS_AS(mine_mi_lower_bound(est, narrow(x, 0, 0, 1), narrow(y, 0, 0, 1), r), ShapeError);
}

TEST_CASE("total loss") {
  auto ce = Tensor::scalar(1.25), mi = Tensor::scalar(0.4), bce = Tensor::scalar(0.3);
  auto t0 = total_loss(ce, mi, bce, {0.0, 0.0});
  CHECK(t0.total.item() == ce.item());
  auto t1 = total_loss(ce, mi, bce, {0.05, 1.0});
  CHECK(t1.total.item() == doctest::Approx(1.25 - 0.05 * 0.4 + 0.3).epsilon(1e-15));
  CHECK(t1.breakdown.l_mi == 0.4);
  CHECK_THROWS_AS(total_loss(Tensor::scalar(std::nan("")), mi, bce, {}), DiagnosticsError);
}

TEST_CASE("FGM perturbation") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    auto g = Tensor::randn({3, 4, 5}, rng, std::exp(double(i % 7) - 3.0));
    auto a = fgm_perturbation(g, 0.5);
    double n = 0.0;
    for (double v : a.n_a.data()) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 0.5) <= 1e-9);
    auto b = fgm_perturbation(g * 10.0, 0.5);
    for (std::size_t k = 0; k < g.numel(); ++k) CHECK(a.n_a.data()[k] == doctest::Approx(b.n_a.data()[k]).epsilon(1e-14));
  }
  auto z = fgm_perturbation(Tensor::zeros({2, 2}), 0.5);
  CHECK(z.zero_gradient);
  for (double v : z.n_a.data()) CHECK(v == 0.0);
}

TEST_CASE("training steps") {
  Fixture fx(64);
  auto cfg = small_config(fx.vocab.size());
  auto samples = corrupt_all(std::vector<TokenSequence>(fx.clean.begin(), fx.clean.begin() + 8), 0.2,
                             TrainConfig{}.noise_kinds, 9, fx.vocab, fx.lexicon);
  auto batch = make_train_batch(samples, cfg.max_len);
  CHECK(batch.labels.size() == batch.src.ids.size());

  SUBCASE("epsilon 0 adversarial step equals the plain step") {
    auto p1 = init_params(cfg, 10), p2 = p1.clone();
    Adam o1(p1.tensors()), o2(p2.tensors());
    StepOptions plain, adv;
    adv.adv = {.enabled = true, .epsilon = 0.0};
    std::mt19937_64 r1(11), r2(11);
    train_step(p1, cfg, batch, plain, o1, r1);
    auto res = train_step(p2, cfg, batch, adv, o2, r2);
    CHECK(res.adversarial_forwards == 1);
    CHECK(max_abs_diff(p1, p2) < 1e-12);
  }
  SUBCASE("attack on frozen parameters") {
    auto p = init_params(cfg, 17);
    p.set_requires_grad(false);
    StepOptions o;
    o.adv.epsilon = 2.0;
    std::mt19937_64 r(18);
    const auto pa = adversarial_perturbation(p, cfg, batch, o, r);
    CHECK_FALSE(pa.zero_gradient);
    double n = 0.0;
    for (double v : pa.n_a.data()) n += v * v;
    CHECK(std::sqrt(n) == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(evaluate_ce(p, cfg, samples, o, 2.0, 19) > evaluate_ce(p, cfg, samples, o, std::nullopt, 19));
  }
  SUBCASE("one small step lowers the combined loss on a fixed batch") {
    auto p = init_params(cfg, 12);
    Adam opt(p.tensors(), {.lr = 1e-4});
    StepOptions o;
    o.adv = {.enabled = true, .epsilon = 0.5};
    o.forward.channel = ChannelKind::identity;
    auto combined = [&] {
      std::mt19937_64 r(13);
      auto pa = adversarial_perturbation(p, cfg, batch, o, r);
      NoGradScope ng;
      std::mt19937_64 r1(13), r2(13);
      return 0.5 * (batch_loss(p, cfg, batch, o, r1).breakdown.total +
                    batch_loss(p, cfg, batch, o, r2, pa.n_a).breakdown.total);
    };
    const double before = combined();
    std::mt19937_64 r(13);
    train_step(p, cfg, batch, o, opt, r);
    CHECK(combined() < before);
  }
  SUBCASE("total loss gradient on a parameter slice") {
    auto p = init_params(cfg, 14);
    std::mt19937_64 jitter(15);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (auto& t : p.tensors())
      for (auto& v : t.mutable_data()) v += nd(jitter);
    StepOptions o;
    o.forward.channel = ChannelKind::identity;
    auto f = [&] {
      std::mt19937_64 r(16);
      return batch_loss(p, cfg, batch, o, r).total;
    };
    CHECK(finite_diff_check_params(f, {p.at("enc.0.ffn.b1"), p.at("det.head.w"), p.at("mi.w2"), p.at("zeta.b2")}, 1e-5,
                                   Stencil::five_point) < 1e-4);
  }
}

TEST_CASE("train loop") {
  Fixture fx(48);
  auto cfg = small_config(fx.vocab.size());
  TrainConfig tc;
  tc.batch = 16;
  tc.noise_ratio = 0.2;
  tc.val_sentences = 8;
  tc.seed = 21;

  SUBCASE("memorizes a single sentence") {
    TrainConfig one = tc;
    one.epochs = 200;
    one.noise_ratio = 0.0;
    one.lr = 3e-3;
    one.val_sentences = 0;
    one.step.forward.channel = ChannelKind::identity;
    auto st = fresh_state(cfg, one);
    train(st, cfg, one, {fx.clean[0]}, {}, fx.vocab, fx.lexicon);
    CHECK(st.log.back().mean.l_ce < 0.05);
    // and the identity-trained model reproduces it
    ChannelConfig ch{ChannelKind::identity, 12.0, 1};
    auto r = transmit_receive(fx.lines[0], st.params, cfg, fx.vocab, fx.lexicon, ch, {.ratio = 0.0});
    CHECK(r.received == normalize(fx.lines[0]));
  }
  SUBCASE("deterministic and exactly resumable") {
    tc.epochs = 3;
    std::vector<TokenSequence> train_set(fx.clean.begin(), fx.clean.begin() + 40);
    std::vector<TokenSequence> val(fx.clean.begin() + 40, fx.clean.end());
    auto a = fresh_state(cfg, tc);
    train(a, cfg, tc, train_set, val, fx.vocab, fx.lexicon);
    auto b = fresh_state(cfg, tc);
    train(b, cfg, tc, train_set, val, fx.vocab, fx.lexicon);
    CHECK(a.log[0].mean.total == b.log[0].mean.total);

    auto c = fresh_state(cfg, tc);
    train(c, cfg, tc, train_set, val, fx.vocab, fx.lexicon, [](const TrainState& s) { return s.epochs_done < 1; });
    REQUIRE(c.epochs_done == 1);
    TrainState resumed{c.params.clone(), c.optimizer, c.epochs_done, c.log};
    train(resumed, cfg, tc, train_set, val, fx.vocab, fx.lexicon);
    REQUIRE(resumed.log.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) {
      CHECK(resumed.log[e].mean.total == a.log[e].mean.total);
      CHECK(resumed.log[e].val_bleu == a.log[e].val_bleu);
    }
    CHECK(max_abs_diff(resumed.params, a.params) == 0.0);
  }
  SUBCASE("adversarial log column") {
    tc.epochs = 1;
    tc.step.adv = {.enabled = true, .epsilon = 0.5};
    auto st = fresh_state(cfg, tc);
    train(st, cfg, tc, fx.clean, {}, fx.vocab, fx.lexicon);
    CHECK(st.log[0].adv_total.has_value());
    TrainConfig bad = tc;
    bad.step.adv.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}
