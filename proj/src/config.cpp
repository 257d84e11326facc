#include "vnt/config.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vnt {

namespace {

void check_keys(const nlohmann::json& j, const std::string& section,
                const std::set<std::string>& allowed) {
  if (!j.is_object())
    throw config_error("config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw config_error("unknown config key '" + section +
                         (section.empty() ? "" : ".") + key + "'");
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["dataset"] = c.dataset;
  j["out"] = c.out;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["model"] = {{"embed_dim", c.model.embed_dim},
                {"depth", c.model.depth},
                {"heads", c.model.heads},
                {"pe_dim", c.model.pe_dim},
                {"seed", c.model.seed}};
  j["pretrain"] = {{"epochs", c.pretrain.epochs},
                   {"batches_per_epoch", c.pretrain.batches_per_epoch},
                   {"max_batch", c.pretrain.max_batch},
                   {"restart", c.pretrain.restart},
                   {"lr", c.pretrain.lr},
                   {"negative_ratio", c.pretrain.negative_ratio},
                   {"seed", c.pretrain.seed}};
  j["vnt"] = {{"alpha", c.vnt.tune.alpha},
              {"steps", c.vnt.tune.steps},
              {"lr_prompt", c.vnt.tune.lr_prompt},
              {"lr_classifier", c.vnt.tune.lr_classifier},
              {"weight_decay", c.vnt.tune.weight_decay},
              {"transductive", c.vnt.tune.transductive},
              {"init", init_name(c.vnt.tune.init)},
              {"ensemble_size", c.vnt.ensemble_size},
              {"noise_scale", c.vnt.noise_scale}};
  j["gppe"] = {{"m", c.gppe.m},
               {"episodes", c.gppe.episodes},
               {"lr", c.gppe.lr}};
  j["eval"] = {{"method", c.eval.method},
               {"part", c.eval.part},
               {"n_way", c.eval.n_way},
               {"k_shot", c.eval.k_shot},
               {"r_query", c.eval.r_query},
               {"tasks_per_rep", c.eval.tasks_per_rep},
               {"reps", c.eval.reps},
               {"checkpoint", c.eval.checkpoint},
               {"dictionary", c.eval.dictionary},
               {"module", c.eval.module},
               {"ablate_unfreeze", c.eval.ablate_unfreeze}};
  j["sweep"] = {{"axis", c.sweep.axis},
                {"m_values", c.sweep.m_values},
                {"alpha_values", c.sweep.alpha_values},
                {"widths", c.sweep.widths},
                {"depths", c.sweep.depths}};
  j["make_dataset"] = {{"preset", c.make_dataset.preset},
                       {"binary_features", c.make_dataset.binary_features}};
  j["export"] = {{"prompt", c.export_emb.prompt},
                 {"part", c.export_emb.part}};
  return j;
}

RunConfig config_from_json(const nlohmann::json& j) {
  check_keys(j, "",
             {"dataset", "out", "seed", "workers", "model", "pretrain", "vnt",
              "gppe", "eval", "sweep", "make_dataset", "export"});
  RunConfig c;
  read(j, "dataset", c.dataset);
  read(j, "out", c.out);
  read(j, "seed", c.seed);
  read(j, "workers", c.workers);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m, "model", {"embed_dim", "depth", "heads", "pe_dim", "seed"});
    read(m, "embed_dim", c.model.embed_dim);
    read(m, "depth", c.model.depth);
    read(m, "heads", c.model.heads);
    read(m, "pe_dim", c.model.pe_dim);
    read(m, "seed", c.model.seed);
  }
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    check_keys(p, "pretrain",
               {"epochs", "batches_per_epoch", "max_batch", "restart", "lr",
                "negative_ratio", "seed"});
    read(p, "epochs", c.pretrain.epochs);
    read(p, "batches_per_epoch", c.pretrain.batches_per_epoch);
    read(p, "max_batch", c.pretrain.max_batch);
    read(p, "restart", c.pretrain.restart);
    read(p, "lr", c.pretrain.lr);
    read(p, "negative_ratio", c.pretrain.negative_ratio);
    read(p, "seed", c.pretrain.seed);
  }
  if (j.contains("vnt")) {
    const auto& v = j.at("vnt");
    check_keys(v, "vnt",
               {"alpha", "steps", "lr_prompt", "lr_classifier", "weight_decay",
                "transductive", "init", "ensemble_size", "noise_scale"});
    read(v, "alpha", c.vnt.tune.alpha);
    read(v, "steps", c.vnt.tune.steps);
    read(v, "lr_prompt", c.vnt.tune.lr_prompt);
    read(v, "lr_classifier", c.vnt.tune.lr_classifier);
    read(v, "weight_decay", c.vnt.tune.weight_decay);
    read(v, "transductive", c.vnt.tune.transductive);
    if (v.contains("init"))
      c.vnt.tune.init = parse_init(v.at("init").get<std::string>());
    read(v, "ensemble_size", c.vnt.ensemble_size);
    read(v, "noise_scale", c.vnt.noise_scale);
  }
  if (j.contains("gppe")) {
    const auto& g = j.at("gppe");
    check_keys(g, "gppe", {"m", "episodes", "lr"});
    read(g, "m", c.gppe.m);
    read(g, "episodes", c.gppe.episodes);
    read(g, "lr", c.gppe.lr);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, "eval",
               {"method", "part", "n_way", "k_shot", "r_query",
                "tasks_per_rep", "reps", "checkpoint", "dictionary", "module",
                "ablate_unfreeze"});
    read(e, "method", c.eval.method);
    read(e, "part", c.eval.part);
    read(e, "n_way", c.eval.n_way);
    read(e, "k_shot", c.eval.k_shot);
    read(e, "r_query", c.eval.r_query);
    read(e, "tasks_per_rep", c.eval.tasks_per_rep);
    read(e, "reps", c.eval.reps);
    read(e, "checkpoint", c.eval.checkpoint);
    read(e, "dictionary", c.eval.dictionary);
    read(e, "module", c.eval.module);
    read(e, "ablate_unfreeze", c.eval.ablate_unfreeze);
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep",
               {"axis", "m_values", "alpha_values", "widths", "depths"});
    read(s, "axis", c.sweep.axis);
    read(s, "m_values", c.sweep.m_values);
    read(s, "alpha_values", c.sweep.alpha_values);
    read(s, "widths", c.sweep.widths);
    read(s, "depths", c.sweep.depths);
  }
  if (j.contains("make_dataset")) {
    const auto& m = j.at("make_dataset");
    check_keys(m, "make_dataset", {"preset", "binary_features"});
    read(m, "preset", c.make_dataset.preset);
    read(m, "binary_features", c.make_dataset.binary_features);
  }
  if (j.contains("export")) {
    const auto& e = j.at("export");
    check_keys(e, "export", {"prompt", "part"});
    read(e, "prompt", c.export_emb.prompt);
    read(e, "part", c.export_emb.part);
  }
  return c;
}

RunConfig load_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  std::ifstream f(path);
  if (!f) throw io_error("cannot read config file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("malformed config JSON in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void apply_env_fallback(RunConfig& cfg) {
  if (!cfg.dataset.empty()) return;
  if (const char* root = std::getenv("VNT_DATA_ROOT")) cfg.dataset = root;
}

SplitPart parse_part(const std::string& name) {
  if (name == "base") return SplitPart::base;
  if (name == "dev") return SplitPart::dev;
  if (name == "test") return SplitPart::test;
  throw config_error("unknown split part: " + name);
}

PromptInit parse_init(const std::string& name) {
  if (name == "random") return PromptInit::random;
  if (name == "prototype") return PromptInit::prototype;
  throw config_error("unknown prompt init mode: " + name);
}

std::string init_name(PromptInit init) {
  return init == PromptInit::random ? "random" : "prototype";
}

std::string make_run_dir(const std::string& out, const std::string& command) {
  namespace fs = std::filesystem;
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y%m%dT%H%M%SZ", &tm);

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw io_error("cannot create output root: " + out);

  const std::string base = out + "/" + stamp + "-" + command;
  std::string dir = base;
  for (int k = 2; fs::exists(dir); ++k)
    dir = base + "-" + std::to_string(k);
  if (!fs::create_directory(dir, ec) || ec)
    throw io_error("cannot create run directory: " + dir);
  return dir;
}

}  // namespace vnt
