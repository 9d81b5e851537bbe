#include "sparsedm/config.hpp"

#include <cstdlib>
#include <thread>

#include "sparsedm/checkpoint.hpp"
#include "sparsedm/errors.hpp"

namespace sparsedm {

namespace {

template <typename T>
void read(const nlohmann::ordered_json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::ordered_json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const nlohmann::ordered_json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  read(j, "data", c.data);
  read(j, "seed", c.seed);
  read(j, "steps", c.steps);
  read(j, "batch_size", c.batch_size);
  read(j, "lr", c.lr);
  read(j, "lr_schedule", c.lr_schedule);
  read(j, "lambda_w", c.lambda_w);
  read(j, "lambda_dense", c.lambda_dense);
  read(j, "lambda_diff", c.lambda_diff);
  read(j, "mask_refresh", c.mask_refresh);
  read(j, "teacher_pool", c.teacher_pool);
  read(j, "schedule", c.schedule);
  read(j, "patterns", c.patterns);
  read(j, "switch_interval", c.switch_interval);
  read(j, "time_steps", c.time_steps);
  read(j, "beta_start", c.beta_start);
  read(j, "beta_end", c.beta_end);
  read(j, "hidden", c.hidden);
  read(j, "embed_dim", c.embed_dim);
  read(j, "n", c.n);
  read(j, "sweep_patterns", c.sweep_patterns);
  read(j, "bench_sizes", c.bench_sizes);
  read(j, "bench_reps", c.bench_reps);
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const FormatError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  try {
    return from_json(nlohmann::ordered_json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["data"] = data;
  j["seed"] = seed;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["lr_schedule"] = lr_schedule;
  j["lambda_w"] = lambda_w;
  j["lambda_dense"] = lambda_dense;
  j["lambda_diff"] = lambda_diff;
  j["mask_refresh"] = mask_refresh;
  j["teacher_pool"] = teacher_pool;
  j["schedule"] = schedule;
  j["patterns"] = patterns;
  j["switch_interval"] = switch_interval;
  j["time_steps"] = time_steps;
  j["beta_start"] = beta_start;
  j["beta_end"] = beta_end;
  j["hidden"] = hidden;
  j["embed_dim"] = embed_dim;
  j["n"] = n;
  j["sweep_patterns"] = sweep_patterns;
  j["bench_sizes"] = bench_sizes;
  j["bench_reps"] = bench_reps;
  return j;
}

void RunConfig::validate() const {
  (void)dataset();
  train_config().validate();
  (void)noise_schedule();
  if (lr_schedule != "constant" && lr_schedule != "cosine") {
    throw ConfigError("lr_schedule must be 'constant' or 'cosine'");
  }
  if (schedule != "fixed" && schedule != "progressive") {
    throw ConfigError("schedule must be 'fixed' or 'progressive'");
  }
  if (schedule == "fixed" && patterns.size() > 1) {
    throw ConfigError("a fixed schedule takes at most one pattern");
  }
  if (switch_interval < 1) throw ConfigError("switch_interval must be positive");
  if (hidden < 32 || hidden % 32 != 0) throw ConfigError("hidden must be a positive multiple of 32");
  if (embed_dim < 2 || embed_dim % 2 != 0) throw ConfigError("embed_dim must be a positive even number");
  if (n < 1) throw ConfigError("n must be positive");
  if (bench_reps < 1) throw ConfigError("bench_reps must be positive");
  try {
    (void)parsed_patterns();
    (void)parsed_sweep_patterns();
  } catch (const PatternError& e) {
    throw ConfigError(e.what());
  }
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.steps = steps;
  t.batch_size = batch_size;
  t.lr = lr;
  t.lr_schedule = lr_schedule == "cosine" ? LrSchedule::cosine : LrSchedule::constant;
  t.lambda_w = lambda_w;
  t.lambda_dense = lambda_dense;
  t.lambda_diff = lambda_diff;
  t.seed = seed;
  t.mask_refresh = mask_refresh;
  t.teacher_pool = teacher_pool;
  return t;
}

NoiseSchedule RunConfig::noise_schedule() const { return make_schedule(time_steps, beta_start, beta_end); }

Architecture RunConfig::architecture() const {
  Architecture a;
  a.hidden = hidden;
  a.embed_dim = embed_dim;
  a.time_steps = time_steps;
  return a;
}

ToyDataset RunConfig::dataset() const { return ToyDataset::parse(data); }

std::vector<NMPattern> RunConfig::parsed_patterns() const {
  std::vector<NMPattern> out;
  for (const auto& p : patterns) out.push_back(NMPattern::parse(p));
  return out;
}

std::vector<NMPattern> RunConfig::parsed_sweep_patterns() const {
  std::vector<NMPattern> out;
  for (const auto& p : sweep_patterns) out.push_back(NMPattern::parse(p));
  return out;
}

MaskSchedule RunConfig::mask_schedule(const NMPattern& fallback) const {
  std::vector<NMPattern> list = parsed_patterns();
  if (list.empty()) list.push_back(fallback);
  if (schedule == "progressive") return MaskSchedule::progressive(list, switch_interval, steps);
  return MaskSchedule::fixed(list.front(), steps);
}

unsigned worker_threads() {
  unsigned cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("SPARSEDM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) cap = static_cast<unsigned>(v);
  }
  return cap;
}

}  // namespace sparsedm
