#include "varscale/model.hpp"

#include "varscale/error.hpp"

namespace varscale {

ModelState init_model(const TrainConfig& config, Rng& rng) {
  ModelState model;
  model.method = config.method;
  model.distance = config.distance;
  if (config.identity_init) {
    model.encoder = identity_encoder(config.embed_dim, config.normalize);
  } else {
    std::vector<Eigen::Index> hidden(config.hidden_dims.begin(), config.hidden_dims.end());
    model.encoder = make_encoder(config.domain.input_dim, hidden, config.embed_dim,
                                 config.normalize, rng);
  }
  switch (config.method) {
    case Method::pn:
      break;
    case Method::svs:
      model.posterior =
          VariationalPosterior::global(config.mu_init, config.sigma_init, config.sigma_mode);
      break;
    case Method::dsvs:
      model.posterior = VariationalPosterior::dimensional(
          config.embed_dim, config.mu_init, config.sigma_init, config.sigma_mode);
      break;
    case Method::davs:
      model.generator = make_generator(config.embed_dim, config.generator_hidden,
                                       config.mu_init, config.sigma_init, rng,
                                       config.generator_init_scale);
      break;
  }
  return model;
}

namespace {

std::span<double> span_of(Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
std::span<double> span_of(Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace

std::vector<ParamView> encoder_views(EncoderParams& encoder) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    auto& layer = encoder.layers[l];
    const std::string base = "encoder.layer" + std::to_string(l);
    views.push_back({base + ".weight", {layer.weight.rows(), layer.weight.cols()},
                     span_of(layer.weight)});
    views.push_back({base + ".bias", {layer.bias.size()}, span_of(layer.bias)});
  }
  return views;
}

std::vector<ParamView> posterior_views(VariationalPosterior& posterior) {
  return {{"posterior.mu", {posterior.mu.size()}, span_of(posterior.mu)},
          {"posterior.sigma", {posterior.sigma.size()}, span_of(posterior.sigma)}};
}

std::vector<ParamView> generator_views(GeneratorParams& g) {
  return {{"generator.w1", {g.w1.rows(), g.w1.cols()}, span_of(g.w1)},
          {"generator.b1", {g.b1.size()}, span_of(g.b1)},
          {"generator.w2", {g.w2.rows(), g.w2.cols()}, span_of(g.w2)},
          {"generator.b2", {g.b2.size()}, span_of(g.b2)}};
}

std::vector<ParamView> model_views(ModelState& model) {
  auto views = encoder_views(model.encoder);
  if (model.method == Method::svs || model.method == Method::dsvs) {
    auto p = posterior_views(model.posterior);
    views.insert(views.end(), p.begin(), p.end());
  } else if (model.method == Method::davs) {
    auto g = generator_views(model.generator);
    views.insert(views.end(), g.begin(), g.end());
  }
  return views;
}

EpisodeObjective evaluate_episode(const ModelState& model, const Episode& episode,
                                  const Eigen::VectorXd& epsilon,
                                  const ObjectiveSettings& settings,
                                  bool with_gradients) {
  const int m = episode.num_support();
  const int q = episode.num_query();
  Eigen::MatrixXd inputs(episode.support.rows(), m + q);
  inputs << episode.support, episode.query;
  const EncodeResult enc = encode_batch(model.encoder, inputs);
  const Eigen::MatrixXd support = enc.embeddings.leftCols(m);
  const Eigen::MatrixXd query = enc.embeddings.rightCols(q);
  const PrototypeSet protos = compute_prototypes(support, episode.support_labels, episode.way);

  EpisodeObjective out;
  out.total = q;
  Eigen::MatrixXd grad_support = Eigen::MatrixXd::Zero(support.rows(), m);
  Eigen::MatrixXd grad_query = Eigen::MatrixXd::Zero(query.rows(), q);

  auto add_plain_backward = [&](const EpisodeForward& fwd, double upstream) {
    const EpisodeGrad eg =
        episode_loss_backward(fwd, query, episode.query_labels, protos, upstream);
    grad_query += eg.queries;
    grad_support += prototype_backward(eg.prototypes, episode.support_labels, protos.counts);
  };

  switch (model.method) {
    case Method::pn: {
      const auto fwd = episode_loss(query, episode.query_labels, protos,
                                    ScalingVector::global(1.0), model.distance);
      out.loss = out.scaled_loss = fwd.loss;
      out.correct = fwd.correct(episode.query_labels);
      out.sample = sample_alpha_with(VariationalPosterior::global(1.0, 0.0),
                                     Eigen::VectorXd::Zero(1), episode.episode_id);
      if (with_gradients) add_plain_backward(fwd, 1.0);
      break;
    }
    case Method::svs:
    case Method::dsvs: {
      out.sample = sample_alpha_with(model.posterior, epsilon, episode.episode_id);
      const auto fwd = episode_loss(query, episode.query_labels, protos,
                                    out.sample.scaling(), model.distance);
      out.scaled_loss = fwd.loss;
      out.kl = kl_term(model.posterior, settings.prior);
      out.loss = fwd.loss + settings.kl_weight * out.kl;
      out.correct = fwd.correct(episode.query_labels);
      if (with_gradients) {
        add_plain_backward(fwd, 1.0);
        out.grad_posterior = posterior_grad(fwd, episode.query_labels, settings.prior,
                                            model.posterior, out.sample, settings.kl_weight);
      }
      break;
    }
    case Method::davs: {
      const double lambda = settings.lambda;
      const auto fwd = amortized_loss(model.generator, support, query, episode.query_labels,
                                      protos, settings.prior, epsilon, settings.kl_weight,
                                      episode.episode_id);
      out.sample = fwd.sample;
      out.task_mu = fwd.generated.posterior.mu;
      out.scaled_loss = fwd.scaled.loss;
      out.kl = fwd.kl;
      out.correct = fwd.scaled.correct(episode.query_labels);
      EpisodeForward plain;
      if (lambda > 0.0) {
        plain = episode_loss(query, episode.query_labels, protos, ScalingVector::global(1.0),
                             DistanceKind::euclidean);
        out.unscaled_loss = plain.loss;
      }
      out.loss = aux_loss(lambda, fwd.loss, out.unscaled_loss);
      if (with_gradients) {
        AmortizedGrad ag = amortized_backward(model.generator, fwd, episode.support_labels,
                                              query, episode.query_labels, protos,
                                              settings.prior, 1.0 - lambda,
                                              settings.kl_weight);
        grad_support += ag.support;
        grad_query += ag.query;
        out.grad_generator = std::move(ag.generator);
        if (lambda > 0.0) add_plain_backward(plain, lambda);
      }
      break;
    }
  }

  if (!std::isfinite(out.loss)) throw NumericError("non-finite episode loss");
  if (with_gradients) {
    Eigen::MatrixXd grad_embeddings(support.rows(), m + q);
    grad_embeddings << grad_support, grad_query;
    out.grad_encoder = encode_backward(model.encoder, enc.tape, grad_embeddings).params;
  }
  return out;
}

std::vector<std::span<double>> gradient_spans(const ModelState& model,
                                              EpisodeObjective& objective) {
  std::vector<std::span<double>> spans;
  for (const auto& v : encoder_views(objective.grad_encoder)) spans.push_back(v.data);
  if (model.method == Method::svs || model.method == Method::dsvs) {
    spans.push_back(span_of(objective.grad_posterior.mu));
    spans.push_back(span_of(objective.grad_posterior.sigma));
  } else if (model.method == Method::davs) {
    for (const auto& v : generator_views(objective.grad_generator)) spans.push_back(v.data);
  }
  return spans;
}

ScalingVector test_scaling(const ModelState& model, const Eigen::MatrixXd& support_embeddings,
                           const Eigen::MatrixXd& query_embeddings) {
  switch (model.method) {
    case Method::pn: return ScalingVector::global(1.0);
    case Method::svs:
    case Method::dsvs: return model.posterior.mean_scaling();
    case Method::davs: {
      const auto gen = generate_posterior(
          model.generator, task_prototype(support_embeddings, query_embeddings));
      return ScalingVector::dimensional(gen.posterior.mu);
    }
  }
  return ScalingVector::global(1.0);
}

}  // namespace varscale
