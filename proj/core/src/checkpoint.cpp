#include "varscale/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "varscale/error.hpp"

namespace varscale {

using nlohmann::json;

namespace {

json array_json(const std::vector<Eigen::Index>& shape, std::span<const double> data) {
  return {{"shape", shape}, {"data", std::vector<double>(data.begin(), data.end())}};
}

json model_json(ModelState model) {
  json arrays = json::object();
  for (const auto& v : model_views(model)) arrays[v.name] = array_json(v.shape, v.data);
  return {{"method", std::string(to_string(model.method))},
          {"distance", std::string(to_string(model.distance))},
          {"normalize", model.encoder.normalize},
          {"encoder_layers", model.encoder.layers.size()},
          {"sigma_mode", model.posterior.sigma_mode == SigmaMode::learned ? "learned" : "fixed"},
          {"posterior_kind",
           model.posterior.kind == ScalingKind::global ? "global" : "dimensional"},
          {"arrays", std::move(arrays)}};
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw CheckpointError(std::string("checkpoint is missing '") + key + "'");
  return j.at(key);
}

std::vector<double> read_array(const json& arrays, const std::string& name,
                               const std::vector<Eigen::Index>& expected_shape) {
  if (!arrays.contains(name)) throw CheckpointError("checkpoint is missing array '" + name + "'");
  const json& a = arrays.at(name);
  const auto shape = require(a, "shape").get<std::vector<Eigen::Index>>();
  if (!expected_shape.empty() && shape != expected_shape)
    throw CheckpointError("checkpoint array '" + name + "' has an unexpected shape");
  auto data = require(a, "data").get<std::vector<double>>();
  Eigen::Index n = 1;
  for (auto s : shape) n *= s;
  if (static_cast<Eigen::Index>(data.size()) != n)
    throw CheckpointError("checkpoint array '" + name + "' size does not match its shape");
  return data;
}

std::vector<Eigen::Index> shape_of(const json& arrays, const std::string& name) {
  if (!arrays.contains(name)) throw CheckpointError("checkpoint is missing array '" + name + "'");
  return require(arrays.at(name), "shape").get<std::vector<Eigen::Index>>();
}

Eigen::MatrixXd read_matrix(const json& arrays, const std::string& name) {
  const auto shape = shape_of(arrays, name);
  if (shape.size() != 2) throw CheckpointError("array '" + name + "' is not a matrix");
  const auto data = read_array(arrays, name, shape);
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), shape[0], shape[1]);
}

Eigen::VectorXd read_vector(const json& arrays, const std::string& name) {
  const auto shape = shape_of(arrays, name);
  if (shape.size() != 1) throw CheckpointError("array '" + name + "' is not a vector");
  const auto data = read_array(arrays, name, shape);
  return Eigen::Map<const Eigen::VectorXd>(data.data(), shape[0]);
}

ModelState model_from_json(const json& j) {
  ModelState model;
  model.method = parse_method(require(j, "method").get<std::string>());
  model.distance = require(j, "distance").get<std::string>() == "cosine"
                       ? DistanceKind::cosine
                       : DistanceKind::euclidean;
  const json& arrays = require(j, "arrays");
  const auto n_layers = require(j, "encoder_layers").get<std::size_t>();
  model.encoder.normalize = require(j, "normalize").get<bool>();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::string base = "encoder.layer" + std::to_string(l);
    model.encoder.layers.push_back(
        {read_matrix(arrays, base + ".weight"), read_vector(arrays, base + ".bias")});
  }
  model.encoder.validate();
  if (model.method == Method::svs || model.method == Method::dsvs) {
    model.posterior.kind = require(j, "posterior_kind").get<std::string>() == "global"
                               ? ScalingKind::global
                               : ScalingKind::dimensional;
    model.posterior.sigma_mode = require(j, "sigma_mode").get<std::string>() == "learned"
                                     ? SigmaMode::learned
                                     : SigmaMode::fixed;
    model.posterior.mu = read_vector(arrays, "posterior.mu");
    model.posterior.sigma = read_vector(arrays, "posterior.sigma");
    model.posterior.validate();
  } else if (model.method == Method::davs) {
    model.generator = {read_matrix(arrays, "generator.w1"), read_vector(arrays, "generator.b1"),
                       read_matrix(arrays, "generator.w2"), read_vector(arrays, "generator.b2")};
    model.generator.validate();
  }
  return model;
}

json buffers_json(const std::string& prefix, const std::vector<std::vector<double>>& buffers) {
  json out = json::object();
  for (std::size_t i = 0; i < buffers.size(); ++i)
    out[prefix + std::to_string(i)] = array_json(
        {static_cast<Eigen::Index>(buffers[i].size())}, buffers[i]);
  return out;
}

std::vector<std::vector<double>> buffers_from_json(const json& arrays, const std::string& prefix,
                                                   std::size_t count) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = prefix + std::to_string(i);
    out.push_back(read_array(arrays, name, shape_of(arrays, name)));
  }
  return out;
}

}  // namespace

json checkpoint_to_json(const TrainingState& s) {
  json opt_arrays = json::object();
  opt_arrays.update(buffers_json("sgd.velocity.", s.optimizer.sgd_state().velocity));
  opt_arrays.update(buffers_json("adam.m.", s.optimizer.adam_state().m));
  opt_arrays.update(buffers_json("adam.v.", s.optimizer.adam_state().v));
  json doc = {
      {"format", "varscale-checkpoint"},
      {"format_version", kCheckpointVersion},
      {"config", to_json(s.config)},
      {"step", s.step},
      {"schedule",
       {{"lambda", s.schedule.lambda},
        {"gamma", s.schedule.gamma},
        {"step_count", s.schedule.step_count}}},
      {"rng", {{"episodes", s.episode_rng.save_state()}, {"scaling", s.scaling_rng.save_state()}}},
      {"model", model_json(s.model)},
      {"optimizer",
       {{"sgd_buffers", s.optimizer.sgd_state().velocity.size()},
        {"adam_buffers", s.optimizer.adam_state().m.size()},
        {"adam_t", s.optimizer.adam_state().t},
        {"arrays", std::move(opt_arrays)}}},
      {"best", {{"val_acc", s.best_val_acc}, {"step", s.best_step}}}};
  if (s.best_step >= 0) doc["best"]["model"] = model_json(s.best_model);
  return doc;
}

TrainingState checkpoint_from_json(const json& doc) {
  try {
    if (!doc.is_object() || doc.value("format", "") != "varscale-checkpoint")
      throw CheckpointError("not a varscale checkpoint");
    const int version = require(doc, "format_version").get<int>();
    if (version != kCheckpointVersion)
      throw CheckpointError("checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " +
                            std::to_string(kCheckpointVersion) + ")");
    const std::uint64_t seed = require(require(doc, "config"), "seed").get<std::uint64_t>();
    TrainConfig config = config_from_json(require(doc, "config"), &seed);

    TrainingState s{config, model_from_json(require(doc, "model")),
                    Optimizer(config.optimizer), {}, Rng(0), Rng(0), 0, {}, -1.0, -1};
    s.step = require(doc, "step").get<std::int64_t>();
    const json& sched = require(doc, "schedule");
    s.schedule.lambda = require(sched, "lambda").get<double>();
    s.schedule.gamma = require(sched, "gamma").get<int>();
    s.schedule.step_count = require(sched, "step_count").get<int>();
    const json& rng = require(doc, "rng");
    s.episode_rng.restore_state(require(rng, "episodes").get<std::string>());
    s.scaling_rng.restore_state(require(rng, "scaling").get<std::string>());

    const json& opt = require(doc, "optimizer");
    const json& opt_arrays = require(opt, "arrays");
    s.optimizer.sgd_state().velocity =
        buffers_from_json(opt_arrays, "sgd.velocity.", require(opt, "sgd_buffers").get<std::size_t>());
    const auto n_adam = require(opt, "adam_buffers").get<std::size_t>();
    s.optimizer.adam_state().m = buffers_from_json(opt_arrays, "adam.m.", n_adam);
    s.optimizer.adam_state().v = buffers_from_json(opt_arrays, "adam.v.", n_adam);
    s.optimizer.adam_state().t = require(opt, "adam_t").get<std::int64_t>();

    const json& best = require(doc, "best");
    s.best_val_acc = require(best, "val_acc").get<double>();
    s.best_step = require(best, "step").get<std::int64_t>();
    if (s.best_step >= 0) s.best_model = model_from_json(require(best, "model"));
    return s;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("corrupt checkpoint config: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("corrupt checkpoint: ") + e.what());
  }
}

void save_checkpoint(const TrainingState& state, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
    out << checkpoint_to_json(state).dump(1) << '\n';
    if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
  }
  std::filesystem::rename(tmp, path);
}

TrainingState load_checkpoint(const std::string& path, const TrainConfig* expected) {
  std::ifstream in(path);
  if (!in) throw CheckpointError("cannot read checkpoint '" + path + "'");
  const json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) throw CheckpointError("checkpoint '" + path + "' is not valid JSON");
  TrainingState state = checkpoint_from_json(doc);
  if (expected != nullptr) {
    const auto& enc = state.model.encoder;
    if (enc.embed_dim() != expected->embed_dim || enc.input_dim() != expected->domain.input_dim)
      throw CheckpointError(
          "checkpoint version mismatch: stored model has input_dim " +
          std::to_string(enc.input_dim()) + ", embed_dim " + std::to_string(enc.embed_dim()) +
          " but the configuration expects input_dim " +
          std::to_string(expected->domain.input_dim) + ", embed_dim " +
          std::to_string(expected->embed_dim));
    if (state.model.method != expected->method)
      throw CheckpointError("checkpoint version mismatch: stored method is " +
                            std::string(to_string(state.model.method)));
  }
  return state;
}

}  // namespace varscale
