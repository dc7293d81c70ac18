#include "varscale/config.hpp"

#include <fstream>
#include <sstream>

#include "varscale/error.hpp"

namespace varscale {

using nlohmann::json;

std::string_view to_string(Method m) {
  switch (m) {
    case Method::pn: return "pn";
    case Method::svs: return "svs";
    case Method::dsvs: return "dsvs";
    case Method::davs: return "davs";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  if (s == "pn") return Method::pn;
  if (s == "svs") return Method::svs;
  if (s == "dsvs") return Method::dsvs;
  if (s == "davs") return Method::davs;
  throw ConfigError("method", "method must be one of pn, svs, dsvs, davs");
}

double default_l_psi(Method m) { return m == Method::dsvs ? 16.0 : 1e-4; }

double default_kl_weight(Method m) {
  switch (m) {
    case Method::dsvs: return 1e-4 / 16.0;
    case Method::davs: return 0.1;
    default: return 1.0;
  }
}

int TrainConfig::episodes_per_epoch() const {
  return std::max(1, (episodes + epochs - 1) / epochs);
}

void TrainConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0)) throw ConfigError(field, std::string(field) + " must be > 0");
  };
  positive(l_theta, "rates.l_theta");
  positive(l_psi, "rates.l_psi");
  positive(l_beta, "rates.l_beta");
  if (train_episode.way < 2) throw ConfigError("episode.train.way", "episode.train.way must be >= 2");
  if (test_episode.way < 2) throw ConfigError("episode.test.way", "episode.test.way must be >= 2");
  for (auto [v, f] : {std::pair{train_episode.shot, "episode.train.shot"},
                      std::pair{train_episode.query, "episode.train.query"},
                      std::pair{test_episode.shot, "episode.test.shot"},
                      std::pair{test_episode.query, "episode.test.query"},
                      std::pair{episodes, "budget.episodes"},
                      std::pair{epochs, "budget.epochs"},
                      std::pair{embed_dim, "encoder.embed_dim"},
                      std::pair{gamma, "davs.gamma"},
                      std::pair{generator_hidden, "davs.hidden"},
                      std::pair{val_episodes, "eval.val_episodes"},
                      std::pair{test_episodes, "eval.test_episodes"},
                      std::pair{log_every, "log.every"}})
    if (v < 1) throw ConfigError(f, std::string(f) + " must be >= 1");
  if (!(prior.sigma0 > 0.0)) throw ConfigError("prior.sigma0", "prior.sigma0 must be > 0");
  if (sigma_init < 0.0) throw ConfigError("init.sigma_init", "init.sigma_init must be >= 0");
  if (sigma_mode == SigmaMode::learned && sigma_init < kSigmaFloor)
    throw ConfigError("init.sigma_init", "a learned sigma must start at >= 1e-2");
  if (kl_weight < 0.0) throw ConfigError("scaling.kl_weight", "scaling.kl_weight must be >= 0");
  if ((method == Method::dsvs || method == Method::davs) &&
      distance != DistanceKind::euclidean)
    throw ConfigError("distance", "dimensional scaling requires the euclidean distance");
  if (identity_init && (!hidden_dims.empty() || embed_dim != domain.input_dim))
    throw ConfigError("encoder.identity_init",
                      "identity_init needs no hidden layers and embed_dim == domain.input_dim");
}

json to_json(const TrainConfig& c) {
  json j;
  j["method"] = std::string(to_string(c.method));
  j["distance"] = std::string(to_string(c.distance));
  j["seed"] = c.seed;
  j["domain"] = {{"input_dim", c.domain.input_dim},
                 {"informative_dims", c.domain.informative_dims},
                 {"num_classes", c.domain.num_classes},
                 {"split", c.domain.split},
                 {"informative_sigma", c.domain.informative_sigma},
                 {"noise_sigma", c.domain.noise_sigma},
                 {"center_range", c.domain.center_range}};
  j["encoder"] = {{"hidden", c.hidden_dims},
                  {"embed_dim", c.embed_dim},
                  {"normalize", c.normalize},
                  {"identity_init", c.identity_init}};
  auto shape = [](const EpisodeShape& s) {
    return json{{"way", s.way}, {"shot", s.shot}, {"query", s.query}};
  };
  j["episode"] = {{"train", shape(c.train_episode)}, {"test", shape(c.test_episode)}};
  j["budget"] = {{"episodes", c.episodes}, {"epochs", c.epochs}};
  j["rates"] = {{"l_theta", c.l_theta}, {"l_psi", c.l_psi}, {"l_beta", c.l_beta}};
  j["optimizer"] = {{"kind", std::string(to_string(c.optimizer.kind))},
                    {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon},
                    {"clip_norm", c.optimizer.clip_norm}};
  j["prior"] = {{"mu0", c.prior.mu0}, {"sigma0", c.prior.sigma0}, {"enabled", c.prior.enabled}};
  j["init"] = {{"mu_init", c.mu_init}, {"sigma_init", c.sigma_init}};
  j["scaling"] = {{"sigma_mode", c.sigma_mode == SigmaMode::fixed ? "fixed" : "learned"},
                  {"kl_weight", c.kl_weight},
                  {"reject_nonpositive_alpha", c.reject_nonpositive_alpha}};
  j["davs"] = {{"gamma", c.gamma},
               {"hidden", c.generator_hidden},
               {"init_scale", c.generator_init_scale}};
  j["eval"] = {{"val_every", c.val_every},
               {"val_episodes", c.val_episodes},
               {"test_episodes", c.test_episodes}};
  j["log"] = {{"dir", c.output_dir},
              {"every", c.log_every},
              {"mu_every", c.mu_log_every},
              {"checkpoint_every", c.checkpoint_every},
              {"wallclock", c.log_wallclock}};
  return j;
}

namespace {

// Every key of `doc` must exist in `reference` (recursively for objects).
void check_known_keys(const json& doc, const json& reference, const std::string& prefix) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!reference.contains(it.key()))
      throw ConfigError(path, "unknown configuration field '" + path + "'");
    if (it->is_object() && reference[it.key()].is_object())
      check_known_keys(*it, reference[it.key()], path);
  }
}

class Reader {
 public:
  explicit Reader(const json& doc) : doc_(doc) {}

  template <class T>
  T get(const std::string& path) const {
    const json* node = &doc_;
    std::stringstream ss(path);
    std::string part;
    while (std::getline(ss, part, '.')) node = &node->at(part);
    try {
      return node->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(path, "configuration field '" + path + "' has the wrong type");
    }
  }

 private:
  const json& doc_;
};

SigmaMode parse_sigma_mode(const std::string& s) {
  if (s == "fixed") return SigmaMode::fixed;
  if (s == "learned") return SigmaMode::learned;
  throw ConfigError("scaling.sigma_mode", "scaling.sigma_mode must be fixed or learned");
}

DistanceKind parse_distance(const std::string& s) {
  if (s == "euclidean") return DistanceKind::euclidean;
  if (s == "cosine") return DistanceKind::cosine;
  throw ConfigError("distance", "distance must be euclidean or cosine");
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("optimizer.kind", "optimizer.kind must be sgd or adam");
}

}  // namespace

TrainConfig config_from_json(const json& doc, const std::uint64_t* fallback_seed) {
  if (!doc.is_object()) throw ConfigError("", "configuration must be a JSON object");
  if (!doc.contains("method"))
    throw ConfigError("method", "missing required field 'method'");
  if (!doc["method"].is_string())
    throw ConfigError("method", "configuration field 'method' has the wrong type");
  const Method method = parse_method(doc["method"].get<std::string>());
  if (!doc.contains("seed") && fallback_seed == nullptr)
    throw ConfigError("seed", "missing required field 'seed' (or set VARSCALE_SEED)");

  TrainConfig defaults;
  defaults.method = method;
  defaults.l_psi = default_l_psi(method);
  defaults.kl_weight = default_kl_weight(method);
  json merged = to_json(defaults);
  check_known_keys(doc, merged, "");
  merged.merge_patch(doc);
  if (!doc.contains("seed")) merged["seed"] = *fallback_seed;

  const Reader r(merged);
  TrainConfig c;
  c.method = method;
  c.distance = parse_distance(r.get<std::string>("distance"));
  c.seed = r.get<std::uint64_t>("seed");
  c.domain.input_dim = r.get<int>("domain.input_dim");
  c.domain.informative_dims = r.get<int>("domain.informative_dims");
  c.domain.num_classes = r.get<int>("domain.num_classes");
  c.domain.split = r.get<std::array<double, 3>>("domain.split");
  c.domain.informative_sigma = r.get<double>("domain.informative_sigma");
  c.domain.noise_sigma = r.get<double>("domain.noise_sigma");
  c.domain.center_range = r.get<double>("domain.center_range");
  c.hidden_dims = r.get<std::vector<int>>("encoder.hidden");
  c.embed_dim = r.get<int>("encoder.embed_dim");
  c.normalize = r.get<bool>("encoder.normalize");
  c.identity_init = r.get<bool>("encoder.identity_init");
  for (auto [shape, name] : {std::pair{&c.train_episode, "train"}, std::pair{&c.test_episode, "test"}}) {
    const std::string base = std::string("episode.") + name + ".";
    shape->way = r.get<int>(base + "way");
    shape->shot = r.get<int>(base + "shot");
    shape->query = r.get<int>(base + "query");
  }
  c.domain.min_way = std::max(c.train_episode.way, c.test_episode.way);
  c.episodes = r.get<int>("budget.episodes");
  c.epochs = r.get<int>("budget.epochs");
  c.l_theta = r.get<double>("rates.l_theta");
  c.l_psi = r.get<double>("rates.l_psi");
  c.l_beta = r.get<double>("rates.l_beta");
  c.optimizer.kind = parse_optimizer(r.get<std::string>("optimizer.kind"));
  c.optimizer.lr = c.l_theta;
  c.optimizer.momentum = r.get<double>("optimizer.momentum");
  c.optimizer.weight_decay = r.get<double>("optimizer.weight_decay");
  c.optimizer.beta1 = r.get<double>("optimizer.beta1");
  c.optimizer.beta2 = r.get<double>("optimizer.beta2");
  c.optimizer.epsilon = r.get<double>("optimizer.epsilon");
  c.optimizer.clip_norm = r.get<double>("optimizer.clip_norm");
  c.prior.mu0 = r.get<double>("prior.mu0");
  c.prior.sigma0 = r.get<double>("prior.sigma0");
  c.prior.enabled = r.get<bool>("prior.enabled");
  c.mu_init = r.get<double>("init.mu_init");
  c.sigma_init = r.get<double>("init.sigma_init");
  c.sigma_mode = parse_sigma_mode(r.get<std::string>("scaling.sigma_mode"));
  c.kl_weight = r.get<double>("scaling.kl_weight");
  c.reject_nonpositive_alpha = r.get<bool>("scaling.reject_nonpositive_alpha");
  c.gamma = r.get<int>("davs.gamma");
  c.generator_hidden = r.get<int>("davs.hidden");
  c.generator_init_scale = r.get<double>("davs.init_scale");
  c.val_every = r.get<int>("eval.val_every");
  c.val_episodes = r.get<int>("eval.val_episodes");
  c.test_episodes = r.get<int>("eval.test_episodes");
  c.output_dir = r.get<std::string>("log.dir");
  c.log_every = r.get<int>("log.every");
  c.mu_log_every = r.get<int>("log.mu_every");
  c.checkpoint_every = r.get<int>("log.checkpoint_every");
  c.log_wallclock = r.get<bool>("log.wallclock");
  c.validate();
  return c;
}

void apply_overrides(json& doc, const std::vector<std::string>& overrides) {
  for (const auto& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError(ov, "override '" + ov + "' is not of the form key=value");
    const std::string key = ov.substr(0, eq);
    const std::string text = ov.substr(eq + 1);
    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::stringstream ss(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      json& child = (*node)[parts[i]];
      if (child.is_null()) child = json::object();
      if (!child.is_object())
        throw ConfigError(key, "override path '" + key + "' crosses a non-object");
      node = &child;
    }
    (*node)[parts.back()] = std::move(value);
  }
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read configuration file '" + path + "'");
  json doc = json::parse(in, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded())
    throw ConfigError("config", "configuration file '" + path + "' is not valid JSON");
  return doc;
}

}  // namespace varscale
