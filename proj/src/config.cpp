#include "stec/config.hpp"

#include "stec/iobits.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

namespace stec::run {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
  if (used != v.size())
    throw ConfigError("config key '" + key + "': trailing characters in '" + v + "'");
  return out;
}

long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long out;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  if (used != v.size())
    throw ConfigError("config key '" + key + "': trailing characters in '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, trim(item)));
  return out;
}

std::vector<int> parse_ints(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    out.push_back(static_cast<int>(parse_int(key, trim(item))));
  return out;
}

std::string join(const std::vector<int>& xs) {
  std::ostringstream os;
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::simclr: return "simclr";
    case Method::stec: return "stec";
    case Method::byol: return "byol";
    case Method::byol_stec: return "byol_stec";
    case Method::relic: return "relic";
    default: return "stec_star";
  }
}

Method method_from_string(const std::string& s) {
  if (s == "simclr") return Method::simclr;
  if (s == "stec") return Method::stec;
  if (s == "byol") return Method::byol;
  if (s == "byol_stec") return Method::byol_stec;
  if (s == "relic") return Method::relic;
  if (s == "stec_star") return Method::stec_star;
  throw ConfigError("unknown method '" + s + "'");
}

void ExperimentCfg::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (resolution < 4) throw ConfigError("resolution must be >= 4");
  if (tau <= 0.0) throw ConfigError("tau must be positive");
  if (lambda_manip < 0.0) throw ConfigError("lambda_manip must be >= 0");
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  if (ema_tau0 < 0.0 || ema_tau0 > 1.0)
    throw ConfigError("ema_tau0 must lie in [0,1]");
  if (probe_train_frac <= 0.0 || probe_train_frac >= 1.0)
    throw ConfigError("probe_train_frac must lie in (0,1)");
  if (encoder.kind != "mlp" && encoder.kind != "smallconv")
    throw ConfigError("encoder must be 'mlp' or 'smallconv'");
  try {
    binning.validate();
    opt::OptimCfg check = optim;
    check.steps_per_epoch = 1;
    check.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (optim.warmup_epochs > epochs)
    throw ConfigError("warmup_epochs must not exceed epochs");
}

ExperimentCfg parse_config_text(const std::string& text) {
  ExperimentCfg cfg;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "method") cfg.method = method_from_string(val);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, val));
    else if (key == "data") cfg.data_dir = val;
    else if (key == "out") cfg.out_dir = val;
    else if (key == "epochs") cfg.epochs = static_cast<int>(parse_int(key, val));
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(key, val));
    else if (key == "resolution") cfg.resolution = static_cast<int>(parse_int(key, val));
    else if (key == "encoder") cfg.encoder.kind = val;
    else if (key == "encoder_widths") cfg.encoder.widths = parse_ints(key, val);
    else if (key == "feature_dim") cfg.encoder.feature_dim = static_cast<int>(parse_int(key, val));
    else if (key == "g_hidden") cfg.heads.g_hidden = static_cast<int>(parse_int(key, val));
    else if (key == "g_out") cfg.heads.g_out = static_cast<int>(parse_int(key, val));
    else if (key == "psi_hidden") cfg.heads.psi_hidden = static_cast<int>(parse_int(key, val));
    else if (key == "byol_predictor") cfg.heads.byol_predictor = parse_bool(key, val);
    else if (key == "bins") cfg.binning.K = static_cast<int>(parse_int(key, val));
    else if (key == "manip_min" || key == "manip_max") {
      const auto xs = parse_doubles(key, val);
      if (xs.size() != 6)
        throw ConfigError("config key '" + key + "': expected 6 comma-separated values");
      for (int k = 0; k < 6; ++k)
        (key == "manip_min" ? cfg.binning.manip_min : cfg.binning.manip_max)[k] = xs[static_cast<std::size_t>(k)];
    }
    else if (key == "action_frame") {
      if (val == "egocentric") cfg.action_frame = ActionFrame::egocentric;
      else if (val == "allocentric") cfg.action_frame = ActionFrame::allocentric;
      else throw ConfigError("action_frame must be 'egocentric' or 'allocentric'");
    }
    else if (key == "manip_loss") {
      if (val == "classification") cfg.manip_kind = ManipLossKind::classification;
      else if (val == "l2") cfg.manip_kind = ManipLossKind::l2;
      else throw ConfigError("manip_loss must be 'classification' or 'l2'");
    }
    else if (key == "lambda_manip") cfg.lambda_manip = parse_double(key, val);
    else if (key == "tau") cfg.tau = parse_double(key, val);
    else if (key == "alpha") cfg.alpha = parse_double(key, val);
    else if (key == "ema_tau0") cfg.ema_tau0 = parse_double(key, val);
    else if (key == "base_lr") cfg.optim.base_lr = parse_double(key, val);
    else if (key == "momentum") cfg.optim.momentum = parse_double(key, val);
    else if (key == "warmup_epochs") cfg.optim.warmup_epochs = static_cast<int>(parse_int(key, val));
    else if (key == "weight_decay") cfg.optim.weight_decay = parse_double(key, val);
    else if (key == "lars_enabled") cfg.optim.lars_enabled = parse_bool(key, val);
    else if (key == "lars_trust_coeff") cfg.optim.lars_trust_coeff = parse_double(key, val);
    else if (key == "crop_min_area") cfg.policy.min_area = parse_double(key, val);
    else if (key == "crop_max_area") cfg.policy.max_area = parse_double(key, val);
    else if (key == "jitter_u") cfg.policy.jitter_u = parse_double(key, val);
    else if (key == "jitter_v") cfg.policy.jitter_v = parse_double(key, val);
    else if (key == "p_mirror") cfg.policy.p_mirror = parse_double(key, val);
    else if (key == "p_jitter") cfg.policy.p_jitter = parse_double(key, val);
    else if (key == "p_grayscale") cfg.policy.p_grayscale = parse_double(key, val);
    else if (key == "blur_enabled") cfg.policy.blur_enabled = parse_bool(key, val);
    else if (key == "p_blur") cfg.policy.p_blur = parse_double(key, val);
    else if (key == "solarize_enabled") cfg.policy.solarize_enabled = parse_bool(key, val);
    else if (key == "p_solarize") cfg.policy.p_solarize = parse_double(key, val);
    else if (key == "log_every") cfg.log_every = static_cast<int>(parse_int(key, val));
    else if (key == "checkpoint_every") cfg.checkpoint_every = static_cast<int>(parse_int(key, val));
    else if (key == "probe_epochs") cfg.probe_epochs = static_cast<int>(parse_int(key, val));
    else if (key == "probe_lr") cfg.probe_lr = parse_double(key, val);
    else if (key == "probe_weight_decay") cfg.probe_weight_decay = parse_double(key, val);
    else if (key == "probe_train_frac") cfg.probe_train_frac = parse_double(key, val);
    else if (key == "probe_batch") cfg.probe_batch = static_cast<int>(parse_int(key, val));
    else throw ConfigError("unknown config key '" + key + "'");
  }

  cfg.encoder.resolution = cfg.resolution;
  cfg.policy.target = cfg.resolution;
  cfg.optim.batch_size = cfg.batch_size;
  cfg.optim.total_epochs = cfg.epochs;
  cfg.heads.K = cfg.binning.K;
  cfg.validate();
  return cfg;
}

ExperimentCfg parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_config(const ExperimentCfg& cfg) {
  std::map<std::string, std::string> kv;
  kv["method"] = to_string(cfg.method);
  kv["seed"] = std::to_string(cfg.seed);
  kv["data"] = cfg.data_dir;
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["resolution"] = std::to_string(cfg.resolution);
  kv["encoder"] = cfg.encoder.kind;
  kv["encoder_widths"] = join(cfg.encoder.effective_widths());
  kv["feature_dim"] = std::to_string(cfg.encoder.feature_dim);
  kv["g_hidden"] = std::to_string(cfg.heads.g_hidden);
  kv["g_out"] = std::to_string(cfg.heads.g_out);
  kv["psi_hidden"] = std::to_string(cfg.heads.psi_hidden);
  kv["byol_predictor"] = cfg.heads.byol_predictor ? "true" : "false";
  kv["bins"] = std::to_string(cfg.binning.K);
  {
    std::ostringstream mn, mx;
    for (int k = 0; k < 6; ++k) {
      mn << (k ? "," : "") << fmt(cfg.binning.manip_min[k]);
      mx << (k ? "," : "") << fmt(cfg.binning.manip_max[k]);
    }
    kv["manip_min"] = mn.str();
    kv["manip_max"] = mx.str();
  }
  kv["action_frame"] =
      cfg.action_frame == ActionFrame::egocentric ? "egocentric" : "allocentric";
  kv["manip_loss"] =
      cfg.manip_kind == ManipLossKind::classification ? "classification" : "l2";
  kv["lambda_manip"] = fmt(cfg.lambda_manip);
  kv["tau"] = fmt(cfg.tau);
  kv["alpha"] = fmt(cfg.alpha);
  kv["ema_tau0"] = fmt(cfg.ema_tau0);
  kv["base_lr"] = fmt(cfg.optim.base_lr);
  kv["momentum"] = fmt(cfg.optim.momentum);
  kv["warmup_epochs"] = std::to_string(cfg.optim.warmup_epochs);
  kv["weight_decay"] = fmt(cfg.optim.weight_decay);
  kv["lars_enabled"] = cfg.optim.lars_enabled ? "true" : "false";
  kv["lars_trust_coeff"] = fmt(cfg.optim.lars_trust_coeff);
  kv["crop_min_area"] = fmt(cfg.policy.min_area);
  kv["crop_max_area"] = fmt(cfg.policy.max_area);
  kv["jitter_u"] = fmt(cfg.policy.jitter_u);
  kv["jitter_v"] = fmt(cfg.policy.jitter_v);
  kv["p_mirror"] = fmt(cfg.policy.p_mirror);
  kv["p_jitter"] = fmt(cfg.policy.p_jitter);
  kv["p_grayscale"] = fmt(cfg.policy.p_grayscale);
  kv["blur_enabled"] = cfg.policy.blur_enabled ? "true" : "false";
  kv["p_blur"] = fmt(cfg.policy.p_blur);
  kv["solarize_enabled"] = cfg.policy.solarize_enabled ? "true" : "false";
  kv["p_solarize"] = fmt(cfg.policy.p_solarize);
  kv["log_every"] = std::to_string(cfg.log_every);
  kv["checkpoint_every"] = std::to_string(cfg.checkpoint_every);
  kv["probe_epochs"] = std::to_string(cfg.probe_epochs);
  kv["probe_lr"] = fmt(cfg.probe_lr);
  kv["probe_weight_decay"] = fmt(cfg.probe_weight_decay);
  kv["probe_train_frac"] = fmt(cfg.probe_train_frac);
  kv["probe_batch"] = std::to_string(cfg.probe_batch);

  std::ostringstream os;
  for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t ExperimentCfg::config_hash() const {
  return fnv1a64(canonical_config(*this));
}

}  // namespace stec::run
