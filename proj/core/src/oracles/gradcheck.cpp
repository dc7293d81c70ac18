#include "varscale/oracles/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "varscale/error.hpp"
#include "varscale/metrics_log.hpp"
#include "varscale/model.hpp"

namespace varscale::oracles {

namespace {

struct Instance {
  ModelState model;
  Episode episode;
  Eigen::VectorXd epsilon;
  ObjectiveSettings settings;
};

int uniform_int(Rng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1)));
}

Instance draw_instance(Method method, Rng& rng) {
  const int D = uniform_int(rng, 3, 7);
  const int M = uniform_int(rng, 2, 5);
  std::vector<Eigen::Index> hidden;
  if (rng.uniform(0.0, 1.0) < 0.7) hidden.push_back(uniform_int(rng, 3, 7));
  const bool normalize = true;

  Instance in;
  in.model.method = method;
  in.model.distance = (method == Method::pn || method == Method::svs) &&
                              rng.uniform(0.0, 1.0) < 0.3
                          ? DistanceKind::cosine
                          : DistanceKind::euclidean;
  in.model.encoder = make_encoder(D, hidden, M, normalize, rng);
  for (auto& layer : in.model.encoder.layers)
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.3 * rng.normal();

  Episode& ep = in.episode;
  ep.way = uniform_int(rng, 2, 4);
  ep.shot = uniform_int(rng, 1, 3);
  const int q = ep.way * uniform_int(rng, 1, 3);
  Eigen::MatrixXd centers(D, ep.way);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = rng.normal();
  ep.support.resize(D, ep.way * ep.shot);
  for (int k = 0; k < ep.way; ++k)
    for (int s = 0; s < ep.shot; ++s) {
      for (int d = 0; d < D; ++d) ep.support(d, k * ep.shot + s) = centers(d, k) + rng.normal();
      ep.support_labels.push_back(k);
    }
  ep.query.resize(D, q);
  for (int j = 0; j < q; ++j) {
    const int k = j % ep.way;
    for (int d = 0; d < D; ++d) ep.query(d, j) = centers(d, k) + rng.normal();
    ep.query_labels.push_back(k);
  }
  for (int k = 0; k < ep.way; ++k) ep.classes.push_back(k);

  in.settings.prior = {rng.uniform(0.0, 2.0), rng.uniform(0.5, 2.0), rng.uniform(0.0, 1.0) < 0.9};
  in.settings.kl_weight = rng.uniform(0.0, 1.0) < 0.5 ? 1.0 : rng.uniform(0.0, 1.0);

  switch (method) {
    case Method::pn:
      break;
    case Method::svs:
      in.model.posterior = VariationalPosterior::global(rng.uniform(0.5, 5.0),
                                                        rng.uniform(0.05, 1.0), SigmaMode::learned);
      in.epsilon = Eigen::VectorXd::Constant(1, rng.normal());
      break;
    case Method::dsvs:
      in.model.posterior = VariationalPosterior::dimensional(M, 1.0, 0.1, SigmaMode::learned);
      in.epsilon.resize(M);
      for (int m = 0; m < M; ++m) {
        in.model.posterior.mu[m] = rng.uniform(0.5, 5.0);
        in.model.posterior.sigma[m] = rng.uniform(0.05, 1.0);
        in.epsilon[m] = rng.normal();
      }
      break;
    case Method::davs: {
      in.model.generator = make_generator(M, uniform_int(rng, 2, 6), rng.uniform(1.0, 5.0),
                                          rng.uniform(0.1, 1.0), rng, 0.5);
      in.epsilon.resize(M);
      for (int m = 0; m < M; ++m) in.epsilon[m] = rng.normal();
      const double u = rng.uniform(0.0, 1.0);
      in.settings.lambda = u < 0.2 ? 0.0 : u < 0.4 ? 1.0 : rng.uniform(0.0, 1.0);
      break;
    }
  }
  return in;
}

bool ill_conditioned(const Instance& in, double margin) {
  const auto& ep = in.episode;
  Eigen::MatrixXd inputs(ep.support.rows(), ep.num_support() + ep.num_query());
  inputs << ep.support, ep.query;
  const EncodeResult enc = encode_batch(in.model.encoder, inputs);
  for (std::size_t l = 0; l + 1 < enc.tape.pre_activations.size(); ++l) {
    const Eigen::MatrixXd& a = enc.tape.pre_activations[l];
    if (a.cwiseAbs().minCoeff() < margin) return true;
    // a unit that is off for every support or every query input
    for (Eigen::Index r = 0; r < a.rows(); ++r)
      if (a.row(r).head(ep.num_support()).maxCoeff() <= 0.0 ||
          a.row(r).tail(ep.num_query()).maxCoeff() <= 0.0)
        return true;
  }
  return false;
}

}  // namespace

GradcheckResult gradcheck(const GradcheckOptions& options) {
  if (options.instances < 1) throw ContractError("gradcheck needs at least one instance");
  GradcheckResult result;
  result.method = options.method;
  Rng rng(options.seed, 0x67c4ull + static_cast<std::uint64_t>(options.method));

  while (result.instances < options.instances) {
    Instance in = draw_instance(options.method, rng);
    if (ill_conditioned(in, options.kink_margin)) {
      ++result.resampled;
      continue;
    }
    EpisodeObjective obj = evaluate_episode(in.model, in.episode, in.epsilon, in.settings);
    const auto grads = gradient_spans(in.model, obj);
    const auto views = model_views(in.model);
    auto loss = [&] {
      return evaluate_episode(in.model, in.episode, in.epsilon, in.settings, false).loss;
    };
    const std::string prefix = "instance" + std::to_string(result.instances) + ".";
    for (std::size_t v = 0; v < views.size(); ++v) {
      for (std::size_t k = 0; k < views[v].data.size(); ++k) {
        const double numeric = finite_diff_adaptive(loss, views[v].data[k], options.h_max, options.levels);
        auto report = compare_gradient(prefix + views[v].name + "[" + std::to_string(k) + "]",
                                       grads[v][k], numeric, options.tolerance);
        result.max_rel_error = std::max(result.max_rel_error, report.rel_error);
        if (!report.pass) ++result.failures;
        result.reports.push_back(std::move(report));
      }
    }
    ++result.instances;
  }
  return result;
}

void write_grad_report_csv(std::ostream& out, const GradcheckResult& result) {
  out << "parameter,analytic,numeric,rel_error,pass\n";
  for (const auto& r : result.reports)
    out << r.name << ',' << format_double(r.analytic) << ',' << format_double(r.numeric) << ','
        << format_double(r.rel_error) << ',' << (r.pass ? "true" : "false") << '\n';
}

}  // namespace varscale::oracles
