#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bpn/continual.hpp"
#include "bpn/metrics.hpp"

namespace bpn {

namespace cfgdetail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

} // namespace cfgdetail

/// The full run configuration as flat section.key=value pairs. Every key has
/// a default; "auto" values are resolved from the dataset and method when
/// the config is finalized, so the canonical form always shows the concrete
/// values a run used.
class RunConfig {
  public:
    RunConfig() : kv_(default_values()) {}

    static const std::map<std::string, std::string>& default_values() {
        static const std::map<std::string, std::string> defaults = {
            {"run.dataset", "toy"},
            {"run.method", "bd_ewc"},
            {"run.seed", "1"},
            {"run.out_dir", "auto"},
            {"run.save_checkpoint", "0"},
            {"network.layers", "auto"},
            {"network.memory_layers", "auto"},
            {"network.memory_k", "auto"},
            {"network.memory_h", "auto"},
            {"train.lr", "0.01"},
            {"train.lr_mem", "auto"},
            {"train.epsilon", "auto"},
            {"train.lambda", "auto"},
            {"train.epochs", "auto"},
            {"train.batch", "64"},
            {"train.fisher_samples", "1000"},
            {"train.eval_batch", "256"},
            {"train.eval_all_tasks_each_epoch", "0"},
            {"data.root", "auto"},
            {"data.classes_per_task", "2"},
            {"data.task_count", "auto"},
            {"data.subsample_per_class", "auto"},
            {"toy.stddev", "0.7"},
            {"toy.points_per_cluster", "500"},
            {"metrics.heatmap_resolution", "100"},
            {"metrics.heatmap_xmin", "-2.5"},
            {"metrics.heatmap_xmax", "6.5"},
            {"metrics.heatmap_ymin", "-2.5"},
            {"metrics.heatmap_ymax", "6.5"},
        };
        return defaults;
    }

    void set(const std::string& key, const std::string& value) {
        if (default_values().find(key) == default_values().end())
            throw ConfigError("unknown config key '" + key + "'");
        kv_[key] = cfgdetail::trim(value);
    }

    const std::string& get(const std::string& key) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    /// Parse "[section]" headers and key = value lines; '#' starts a comment.
    void apply_text(const std::string& text) {
        std::istringstream ss(text);
        std::string line, section;
        std::size_t lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = cfgdetail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) +
                                      ": malformed section header");
                section = cfgdetail::trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": expected key = value");
            std::string key = cfgdetail::trim(line.substr(0, eq));
            if (key.find('.') == std::string::npos && !section.empty())
                key = section + "." + key;
            set(key, line.substr(eq + 1));
        }
    }

    void apply_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config file: " + path);
        std::stringstream buf;
        buf << is.rdbuf();
        apply_text(buf.str());
    }

    /// "key=value" override (the --set flag).
    void apply_override(const std::string& kveq) {
        const auto eq = kveq.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kveq + "': expected key=value");
        set(cfgdetail::trim(kveq.substr(0, eq)), kveq.substr(eq + 1));
        overrides_.push_back(kveq);
    }

    const std::vector<std::string>& overrides() const { return overrides_; }
    const std::map<std::string, std::string>& raw() const { return kv_; }

    /// Raw config minus method and output location: two configs are
    /// method-comparable iff these texts match.
    std::string comparable_text() const {
        std::string out;
        for (const auto& [k, v] : kv_) {
            if (k == "run.method" || k == "run.out_dir") continue;
            out += k + "=" + v + "\n";
        }
        return out;
    }

  private:
    std::map<std::string, std::string> kv_;
    std::vector<std::string> overrides_;
};

/// Built-in presets: <dataset>_<method> for every dataset/method pair,
/// e.g. "toy_bd_ewc" or "mnist_stl".
inline bool lookup_preset(const std::string& name, RunConfig& cfg) {
    static const std::vector<std::string> datasets = {"toy", "mnist", "cifar10", "cifar100"};
    static const std::vector<std::string> methods = {"bd_ewc", "gd_ewc", "ewc", "sgd", "stl"};
    for (const auto& d : datasets)
        for (const auto& m : methods)
            if (name == d + "_" + m) {
                cfg.set("run.dataset", d);
                cfg.set("run.method", m);
                return true;
            }
    return false;
}

/// Fully resolved, typed configuration.
struct ResolvedConfig {
    std::string dataset;
    Method method = Method::BdEwc;
    std::string out_dir;
    bool save_checkpoint = false;
    NetworkConfig net;
    TrainConfig train;
    std::string data_root;
    std::size_t classes_per_task = 2;
    std::size_t task_count = 0;
    std::size_t subsample_per_class = 0;
    ClusterSpec toy;
    std::size_t heatmap_resolution = 100;
    HeatmapBounds bounds;
    std::string canonical_text;   ///< resolved key=value lines, sorted
    std::string comparable_text;  ///< raw config minus method/out_dir
    std::string digest;           ///< FNV-1a 64 over canonical_text, hex
    std::vector<std::string> overrides;
};

namespace cfgdetail {

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream ss(value);
    T out{};
    ss >> out;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw ConfigError(key + ": cannot parse '" + value + "'");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "0" || value == "false") return false;
    if (value == "1" || value == "true") return true;
    throw ConfigError(key + ": expected 0/1, got '" + value + "'");
}

inline Method parse_method(const std::string& value) {
    if (value == "bd_ewc") return Method::BdEwc;
    if (value == "gd_ewc") return Method::GdEwc;
    if (value == "ewc") return Method::EwcOnly;
    if (value == "sgd") return Method::PlainSgd;
    if (value == "stl") return Method::Stl;
    throw ConfigError("run.method: unknown method '" + value +
                      "' (expected bd_ewc|gd_ewc|ewc|sgd|stl)");
}

} // namespace cfgdetail

/// Resolve every "auto" to its dataset/method-dependent concrete value,
/// validate the combination, and freeze the canonical form.
inline ResolvedConfig finalize(const RunConfig& cfg) {
    using namespace cfgdetail;
    ResolvedConfig r;
    r.dataset = cfg.get("run.dataset");
    if (r.dataset != "toy" && r.dataset != "mnist" && r.dataset != "cifar10" &&
        r.dataset != "cifar100")
        throw ConfigError("run.dataset: unknown dataset '" + r.dataset + "'");
    r.method = parse_method(cfg.get("run.method"));
    const bool cifar = r.dataset == "cifar10" || r.dataset == "cifar100";

    r.train.lr = parse_number<double>("train.lr", cfg.get("train.lr"));
    // Memory-step defaults keep the sign-step swing per update around one
    // logit for the default bank sizes; the anchor weight is softer on the
    // toy problem, whose two tasks overlap on class 0.
    const std::string lr_mem = cfg.get("train.lr_mem");
    r.train.lr_mem = (lr_mem == "auto") ? 0.01 : parse_number<double>("train.lr_mem", lr_mem);
    const std::string epsilon = cfg.get("train.epsilon");
    r.train.epsilon =
        (epsilon == "auto") ? 0.5 : parse_number<double>("train.epsilon", epsilon);
    const std::string lambda = cfg.get("train.lambda");
    r.train.lambda = (lambda == "auto") ? (r.dataset == "toy" ? 10.0 : 100.0)
                                        : parse_number<double>("train.lambda", lambda);
    r.train.batch = parse_number<std::size_t>("train.batch", cfg.get("train.batch"));
    r.train.fisher_samples =
        parse_number<std::size_t>("train.fisher_samples", cfg.get("train.fisher_samples"));
    r.train.eval_batch = parse_number<std::size_t>("train.eval_batch", cfg.get("train.eval_batch"));
    r.train.eval_all_tasks_each_epoch = parse_bool("train.eval_all_tasks_each_epoch",
                                                   cfg.get("train.eval_all_tasks_each_epoch"));
    r.train.seed = parse_number<std::uint64_t>("run.seed", cfg.get("run.seed"));
    if (r.train.batch == 0) throw ConfigError("train.batch: must be >= 1");

    const std::string epochs = cfg.get("train.epochs");
    r.train.epochs = (epochs == "auto") ? (cifar ? 20 : 10)
                                        : parse_number<std::size_t>("train.epochs", epochs);

    const std::string tc = cfg.get("data.task_count");
    r.classes_per_task =
        parse_number<std::size_t>("data.classes_per_task", cfg.get("data.classes_per_task"));
    if (r.classes_per_task == 0) throw ConfigError("data.classes_per_task: must be >= 1");
    if (tc == "auto")
        r.task_count = (r.dataset == "cifar100") ? 10 : 0;
    else
        r.task_count = parse_number<std::size_t>("data.task_count", tc);

    const std::string sub = cfg.get("data.subsample_per_class");
    if (sub == "auto")
        r.subsample_per_class = (r.dataset == "mnist") ? 2000 : (cifar ? 1000 : 0);
    else
        r.subsample_per_class = parse_number<std::size_t>("data.subsample_per_class", sub);

    const std::string root = cfg.get("data.root");
    if (root == "auto") {
        const char* env = std::getenv("BPN_DATA_ROOT");
        r.data_root = env ? env : "data";
    } else {
        r.data_root = root;
    }

    r.toy.stddev = parse_number<double>("toy.stddev", cfg.get("toy.stddev"));
    r.toy.points_per_cluster =
        parse_number<std::size_t>("toy.points_per_cluster", cfg.get("toy.points_per_cluster"));
    r.toy.seed = r.train.seed;

    // class count seen by the run (the shared head width)
    std::size_t n_classes;
    if (r.dataset == "toy") {
        n_classes = 3;
    } else {
        const std::size_t total = (r.dataset == "cifar100") ? 100 : 10;
        if (r.task_count == 0) {
            if (total % r.classes_per_task != 0)
                throw ConfigError("data.classes_per_task: " + std::to_string(total) +
                                  " classes not divisible by " +
                                  std::to_string(r.classes_per_task));
            n_classes = total;
        } else {
            n_classes = r.task_count * r.classes_per_task;
            if (n_classes > total)
                throw ConfigError("data.task_count: " + std::to_string(r.task_count) + " x " +
                                  std::to_string(r.classes_per_task) + " classes exceed " +
                                  std::to_string(total));
        }
    }

    const std::string layers = cfg.get("network.layers");
    if (layers == "auto") {
        if (r.dataset == "toy")
            r.net.layer_sizes = {2, 64, 64, 3};
        else if (r.dataset == "mnist")
            r.net.layer_sizes = {784, 300, 300, 300, 300, 300, n_classes};
        else
            r.net.layer_sizes = {3072, 300, 300, 300, 300, 300, n_classes};
    } else {
        for (const auto& tok : split_list(layers))
            r.net.layer_sizes.push_back(parse_number<std::size_t>("network.layers", tok));
        if (r.net.layer_sizes.size() < 2) throw ConfigError("network.layers: need >= 2 sizes");
        if (r.net.layer_sizes.back() != n_classes)
            throw ConfigError("network.layers: output width " +
                              std::to_string(r.net.layer_sizes.back()) + " != class count " +
                              std::to_string(n_classes));
    }

    const std::string mem = cfg.get("network.memory_layers");
    const bool wants_memory = method_uses_memory(r.method);
    if (mem == "auto") {
        if (wants_memory) r.net.memory_layers.insert(r.net.layer_sizes.size() - 2);
    } else if (mem == "none") {
        if (wants_memory)
            throw ConfigError("network.memory_layers: method " +
                              std::string(method_name(r.method)) + " needs memory layers");
    } else if (mem == "last") {
        r.net.memory_layers.insert(r.net.layer_sizes.size() - 2);
    } else {
        for (const auto& tok : split_list(mem))
            r.net.memory_layers.insert(parse_number<std::size_t>("network.memory_layers", tok));
    }
    if (!wants_memory && !r.net.memory_layers.empty())
        throw ConfigError("network.memory_layers: method " + std::string(method_name(r.method)) +
                          " must not use memory layers");
    if (wants_memory && r.net.memory_layers.empty())
        throw ConfigError("network.memory_layers: method " + std::string(method_name(r.method)) +
                          " needs memory layers");

    const std::string k = cfg.get("network.memory_k");
    const std::string h = cfg.get("network.memory_h");
    const std::size_t auto_kh = (r.dataset == "toy") ? 64 : 200;
    r.net.memory_k = (k == "auto") ? auto_kh : parse_number<std::size_t>("network.memory_k", k);
    r.net.memory_h = (h == "auto") ? auto_kh : parse_number<std::size_t>("network.memory_h", h);
    if (r.net.memory_layers.empty()) {
        r.net.memory_k = 0;
        r.net.memory_h = 0;
    }
    r.net.validate();

    r.save_checkpoint = parse_bool("run.save_checkpoint", cfg.get("run.save_checkpoint"));
    r.heatmap_resolution = parse_number<std::size_t>("metrics.heatmap_resolution",
                                                     cfg.get("metrics.heatmap_resolution"));
    r.bounds.xmin = parse_number<double>("metrics.heatmap_xmin", cfg.get("metrics.heatmap_xmin"));
    r.bounds.xmax = parse_number<double>("metrics.heatmap_xmax", cfg.get("metrics.heatmap_xmax"));
    r.bounds.ymin = parse_number<double>("metrics.heatmap_ymin", cfg.get("metrics.heatmap_ymin"));
    r.bounds.ymax = parse_number<double>("metrics.heatmap_ymax", cfg.get("metrics.heatmap_ymax"));

    const std::string out = cfg.get("run.out_dir");
    r.out_dir = (out == "auto") ? "runs/" + r.dataset + "_" + method_name(r.method) + "_seed" +
                                      std::to_string(r.train.seed)
                                : out;

    // canonical form: the resolved value of every key, sorted
    std::map<std::string, std::string> canon = cfg.raw();
    canon["run.out_dir"] = r.out_dir;
    canon["train.lr_mem"] = fmt17(r.train.lr_mem);
    canon["train.epsilon"] = fmt17(r.train.epsilon);
    canon["train.lambda"] = fmt17(r.train.lambda);
    canon["train.epochs"] = std::to_string(r.train.epochs);
    canon["data.task_count"] = std::to_string(r.task_count);
    canon["data.subsample_per_class"] = std::to_string(r.subsample_per_class);
    canon["data.root"] = r.data_root;
    {
        std::string s;
        for (std::size_t i = 0; i < r.net.layer_sizes.size(); ++i)
            s += (i ? "," : "") + std::to_string(r.net.layer_sizes[i]);
        canon["network.layers"] = s;
        s.clear();
        for (std::size_t l : r.net.memory_layers) s += (s.empty() ? "" : ",") + std::to_string(l);
        canon["network.memory_layers"] = s.empty() ? "none" : s;
        canon["network.memory_k"] = std::to_string(r.net.memory_k);
        canon["network.memory_h"] = std::to_string(r.net.memory_h);
    }
    for (const auto& [key, value] : canon) r.canonical_text += key + "=" + value + "\n";
    r.comparable_text = cfg.comparable_text();

    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(
                      fnv1a_bytes(r.canonical_text.data(), r.canonical_text.size())));
    r.digest = buf;
    r.overrides = cfg.overrides();
    return r;
}

} // namespace bpn
