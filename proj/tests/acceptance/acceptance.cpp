// Desk-scale acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>
#include <string>

#include "varscale/checkpoint.hpp"
#include "varscale/config.hpp"
#include "varscale/oracles/geometry.hpp"
#include "varscale/oracles/gradcheck.hpp"
#include "varscale/oracles/joint_baseline.hpp"
#include "varscale/oracles/mc_kl.hpp"
#include "varscale/trainer.hpp"

using namespace varscale;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

TrainConfig make_config(Method method, std::uint64_t seed, std::vector<std::string> overrides = {}) {
  nlohmann::json doc = {{"method", std::string(to_string(method))}, {"seed", seed}};
  overrides.insert(overrides.begin(), "budget.episodes=3000");
  apply_overrides(doc, overrides);
  return config_from_json(doc);
}

double test_accuracy(const TrainConfig& cfg) {
  const auto domain = make_domain(cfg.domain, cfg.seed);
  const auto r = train(cfg, domain);
  return meta_test(selected_model(r.state), domain, Partition::test, cfg.test_episode,
                   cfg.test_episodes, cfg.seed)
      .mean;
}

std::vector<double> flatten(ModelState model) {
  std::vector<double> out;
  for (const auto& v : model_views(model)) out.insert(out.end(), v.data.begin(), v.data.end());
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  for (Method m : {Method::svs, Method::dsvs, Method::davs}) {
    oracles::GradcheckOptions o;
    o.method = m;
    o.seed = 1;
    o.instances = 100;
    const auto r = oracles::gradcheck(o);
    ok = ok && r.failures == 0;
    detail += std::string(to_string(m)) + " " + std::to_string(r.reports.size()) + " entries, " +
              std::to_string(r.failures) + " failures, max rel " + sci(r.max_rel_error) + "; ";
  }
  const double s = seconds_since(t0);
  return {ok && s < 60.0, detail + fmt(s, 1) + " s"};
}

Outcome kl_oracle() {
  Rng rng(2024, 11);
  struct Pair { double mu, sigma, mu0, sigma0; };
  std::vector<Pair> pairs{{100.0, 0.2, 1.0, 1.0}};
  for (int i = 0; i < 20; ++i)
    pairs.push_back({rng.uniform(-5, 5), rng.uniform(0.1, 3), rng.uniform(-2, 2), rng.uniform(0.3, 3)});
  int ok = 0;
  double worst = 0.0;
  for (const auto& p : pairs) {
    const double closed =
        kl_term(VariationalPosterior::global(p.mu, p.sigma), {p.mu0, p.sigma0, true}) - 0.5;
    const auto mc = oracles::mc_kl(p.mu, p.sigma, p.mu0, p.sigma0, 1000000, rng);
    const double z = std::abs(mc.estimate - closed) / mc.std_error;
    worst = std::max(worst, z);
    ok += z <= 3.0;
  }
  const double paper = kl_term(VariationalPosterior::global(100.0, 0.2), {1.0, 1.0, true});
  const bool paper_ok = std::abs(paper - 4902.1294) < 5e-5;
  return {ok == static_cast<int>(pairs.size()) && paper_ok,
          std::to_string(ok) + "/" + std::to_string(pairs.size()) + " pairs within 3 SE (worst " +
              fmt(worst, 2) + " SE); closed form at defaults " + fmt(paper, 4)};
}

Outcome special_case() {
  auto cfg = make_config(Method::svs, 1, {"init.sigma_init=0", "prior.enabled=false",
                                          "init.mu_init=1", "rates.l_psi=0.05",
                                          "eval.val_every=0"});
  const auto domain = make_domain(cfg.domain, cfg.seed);
  const auto base = oracles::joint_training_baseline(cfg, domain, 100);
  Trainer t(initial_state(cfg), domain);
  double worst = 0.0;
  for (int s = 0; s <= 100; ++s) {
    if (s > 0) t.step();
    auto mine = flatten(t.state().model);
    mine.pop_back();  // sigma, fixed at 0
    const auto ref = base[s].flatten();
    if (mine.size() != ref.size()) return {false, "parameter layouts differ"};
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(mine[i] - ref[i]));
  }
  return {worst <= 1e-10, "max componentwise gap over 100 steps " + sci(worst)};
}

Outcome figure_one() {
  const oracles::FigureOneInstance fig;
  const int g_before = oracles::geometry_oracle(fig.query, fig.centers, {1.0, 1.0});
  const int g_after = oracles::geometry_oracle(fig.query, fig.centers, {1.5, 0.5});
  Eigen::MatrixXd P(2, 2);
  P << fig.centers[0][0], fig.centers[1][0], fig.centers[0][1], fig.centers[1][1];
  const PrototypeSet protos{P, {1, 1}};
  const Eigen::Vector2d q(fig.query[0], fig.query[1]);
  const int d_before = predict(q, protos, ScalingVector::dimensional(Eigen::Vector2d(1, 1)));
  const int d_after = predict(q, protos, ScalingVector::dimensional(Eigen::Vector2d(2.25, 0.25)));
  const bool ok = g_before == 1 && g_after == 0 && d_before == 1 && d_after == 0;
  return {ok, "oracle class " + std::to_string(g_before + 1) + " -> " + std::to_string(g_after + 1) +
                  ", dimensional_distance class " + std::to_string(d_before + 1) + " -> " +
                  std::to_string(d_after + 1)};
}

Outcome ordering() {
  const auto t0 = Clock::now();
  double pn = 0, dsvs = 0, pn_cos = 0, svs_cos = 0;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    pn += test_accuracy(make_config(Method::pn, s)) / 5;
    dsvs += test_accuracy(make_config(Method::dsvs, s)) / 5;
    pn_cos += test_accuracy(make_config(Method::pn, s, {"distance=cosine"})) / 5;
    svs_cos += test_accuracy(make_config(Method::svs, s, {"distance=cosine"})) / 5;
  }
  const double secs = seconds_since(t0);
  const bool ok = dsvs - pn >= 0.02 && svs_cos - pn_cos >= 0.02 && secs < 600;
  return {ok, "PN " + fmt(pn) + ", D-SVS " + fmt(dsvs) + " (+" + fmt(100 * (dsvs - pn), 2) +
                  " pts); cosine PN " + fmt(pn_cos) + ", SVS " + fmt(svs_cos) + " (+" +
                  fmt(100 * (svs_cos - pn_cos), 2) + " pts); " + fmt(secs, 1) + " s"};
}

Outcome dimension_discovery() {
  int wins = 0;
  std::string detail;
  for (std::uint64_t s = 1; s <= 5; ++s) {
    const auto cfg = make_config(Method::dsvs, s, {"encoder.identity_init=true", "encoder.hidden=[]"});
    const auto domain = make_domain(cfg.domain, cfg.seed);
    const auto r = train(cfg, domain);
    const auto& mu = r.state.model.posterior.mu;
    std::vector<double> inf, noise;
    for (int d : domain.informative_dims) inf.push_back(mu(d));
    for (int d : domain.noise_dims) noise.push_back(mu(d));
    const double mi = median(inf), mn = median(noise);
    wins += mn < mi;
    detail += "seed " + std::to_string(s) + ": " + fmt(mn, 2) + " vs " + fmt(mi, 2) + "; ";
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds with noise median < informative median (" +
                         detail.substr(0, detail.size() - 2) + ")"};
}

Outcome argmax_invariance() {
  const auto cfg = make_config(Method::svs, 1, {"budget.episodes=500"});
  const auto domain = make_domain(cfg.domain, cfg.seed);
  const auto model = train(cfg, domain).state.model;
  const double alpha = model.posterior.mu(0);
  long compared = 0, differ = 0;
  for (int e = 0; e < 1000; ++e) {
    Rng rng(77, e);
    const Episode ep = sample_episode(domain, Partition::test, 5, 5, 15, rng, e);
    const auto s = encode_batch(model.encoder, ep.support).embeddings;
    const auto q = encode_batch(model.encoder, ep.query).embeddings;
    const auto protos = compute_prototypes(s, ep.support_labels, ep.way);
    for (int j = 0; j < ep.num_query(); ++j, ++compared)
      differ += predict(q.col(j), protos, ScalingVector::global(alpha)) !=
                predict(q.col(j), protos, ScalingVector::global(1.0));
  }
  return {differ == 0, std::to_string(compared) + " queries, " + std::to_string(differ) +
                           " differing predictions at alpha " + fmt(alpha, 3) + " vs 1"};
}

Outcome overhead() {
  // Interleaved blocks so slow drifts of the machine hit both methods alike.
  const auto cfg_pn = make_config(Method::pn, 1, {"eval.val_every=0"});
  const auto cfg_svs = make_config(Method::svs, 1, {"eval.val_every=0"});
  const auto domain = make_domain(cfg_pn.domain, 1);
  Trainer pn(initial_state(cfg_pn), domain), svs(initial_state(cfg_svs), domain);
  for (int b = 0; b < 30; ++b) {
    pn.run(pn.state().step + 100);
    svs.run(svs.state().step + 100);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / v.size();
  };
  const double a = mean(pn.metrics().step_ms), b = mean(svs.metrics().step_ms);
  return {b <= 1.10 * a, "mean ms/episode PN " + fmt(a, 4) + ", SVS " + fmt(b, 4) + ", ratio " +
                             fmt(b / a, 3) + " over " + std::to_string(pn.metrics().step_ms.size()) +
                             " episodes each"};
}

Outcome robustness() {
  double mu[2];
  const double inits[2] = {1.0, 10.0};
  for (int i = 0; i < 2; ++i) {
    const auto cfg = make_config(Method::svs, 1, {"rates.l_psi=1e-3",
                                                  "init.mu_init=" + fmt(inits[i], 1)});
    const auto domain = make_domain(cfg.domain, cfg.seed);
    mu[i] = train(cfg, domain).state.model.posterior.mu(0);
  }
  const double gap = std::abs(mu[0] - mu[1]);
  const double rel = gap / ((std::abs(mu[0]) + std::abs(mu[1])) / 2);
  return {rel <= 0.10, "final mu " + fmt(mu[0], 3) + " (init 1) vs " + fmt(mu[1], 3) +
                           " (init 10), relative gap " + fmt(100 * rel, 2) + "%"};
}

Outcome lambda_schedule() {
  // 200 epochs of 5 episodes; gamma = 125 epochs.
  const auto cfg = make_config(Method::davs, 1, {"budget.episodes=1000", "budget.epochs=200",
                                                 "davs.gamma=125", "eval.val_every=0"});
  const auto domain = make_domain(cfg.domain, cfg.seed);
  Trainer t(initial_state(cfg), domain);
  int bad_lambda = 0, bad_loss = 0, zero_steps = 0, blended_steps = 0;
  while (t.state().step < cfg.episodes) {
    const TrainingState before = t.state();
    const int epoch = static_cast<int>(before.step / cfg.episodes_per_epoch());
    if (epoch >= 125) {
      ++zero_steps;
      bad_lambda += before.schedule.lambda != 0.0;
      Rng er = before.episode_rng, sr = before.scaling_rng;
      const Episode ep = sample_episode(domain, Partition::train, cfg.train_episode.way,
                                        cfg.train_episode.shot, cfg.train_episode.query, er,
                                        before.step);
      Eigen::VectorXd eps(cfg.embed_dim);
      for (auto& e : eps) e = sr.normal();
      const auto pure = evaluate_episode(before.model, ep, eps, {cfg.prior, cfg.kl_weight, 0.0});
      t.step();
      const auto& row = t.metrics().rows.back();
      bad_loss += row.loss != pure.loss;
      bad_loss += aux_loss(before.schedule.lambda, pure.loss, pure.unscaled_loss) != pure.loss;
    } else {
      blended_steps += before.schedule.lambda > 0.0;
      t.step();
    }
  }
  const bool ok = bad_lambda == 0 && bad_loss == 0 && blended_steps == 625;
  return {ok, std::to_string(zero_steps) + " episodes from epoch 125 on: " +
                  std::to_string(bad_lambda) + " with lambda != 0, " + std::to_string(bad_loss) +
                  " loss mismatches; lambda > 0 on " + std::to_string(blended_steps) +
                  " earlier episodes"};
}

Outcome determinism(const std::string& work) {
  std::string files[2];
  for (int i = 0; i < 2; ++i) {
    const std::string dir = work + "/determinism_" + std::to_string(i);
    fs::remove_all(dir);
    auto cfg = make_config(Method::davs, 7, {"budget.episodes=600", "log.dir=" + dir});
    const auto domain = make_domain(cfg.domain, cfg.seed);
    train(cfg, domain);
    files[i] = read_file(dir + "/metrics.csv") + read_file(dir + "/mu.csv");
  }
  const bool same_csv = !files[0].empty() && files[0] == files[1];

  double worst = 0.0;
  for (Method m : {Method::svs, Method::dsvs, Method::davs}) {
    auto cfg = make_config(m, 3, {"budget.episodes=400", "optimizer.kind=adam",
                                  "budget.epochs=40", "davs.gamma=10"});
    const auto domain = make_domain(cfg.domain, cfg.seed);
    const auto straight = train(cfg, domain);
    Trainer first(initial_state(cfg), domain);
    first.run(200);
    const std::string path = work + "/resume_" + std::string(to_string(m)) + ".ckpt";
    save_checkpoint(first.state(), path);
    Trainer second(load_checkpoint(path, &cfg), domain);
    second.run();
    const auto a = flatten(straight.state.model), b = flatten(second.state().model);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  }
  return {same_csv && worst <= 1e-12,
          std::string(same_csv ? "byte-identical" : "DIFFERENT") +
              " metrics/mu CSVs for equal seeds; resume vs uninterrupted max gap " + sci(worst)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::string work = argc > 1 ? argv[1] : "acceptance_runs";
  fs::create_directories(work);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"KL oracle", kl_oracle},
      {"special-case equivalence", special_case},
      {"dimensional scaling flips the nearest class", figure_one},
      {"synthetic-domain ordering", ordering},
      {"dimension discovery", dimension_discovery},
      {"argmax invariance", argmax_invariance},
      {"SVS overhead", overhead},
      {"robustness to mu_init", robustness},
      {"lambda schedule", lambda_schedule},
      {"determinism and checkpoint round-trip", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << i + 1 << " " << (o.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].first << ": " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
