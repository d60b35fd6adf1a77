#include "vaead/run.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include <openssl/sha.h>

#include "vaead/errors.hpp"

namespace vaead {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& section, std::initializer_list<const char*> known) {
    if (!obj.is_object()) throw ConfigError(section + " must be an object");
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) {
            throw ConfigError((section.empty() ? key : section + "." + key) + ": unknown field");
        }
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& section) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError((section.empty() ? std::string(key) : section + "." + key) + ": " + e.what());
    }
}

} // namespace

void RunConfig::validate() const {
    try {
        model.validate();
        eval.ssm.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("eval.ssm: ") + e.what());
    }
    if (train.epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (!(train.learning_rate > 0)) throw ConfigError("train.learning_rate must be positive");
}

RunConfig default_run_config(Architecture arch) {
    RunConfig c;
    c.model = default_model_config(arch);
    return c;
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"seed", c.seed},
             {"dataset",
              {{"root", c.dataset.root},
               {"kind", std::string(to_string(c.dataset.kind))},
               {"categories", c.dataset.categories}}},
             {"model", c.model},
             {"train",
              {{"epochs", c.train.epochs},
               {"batch_size", c.train.batch_size},
               {"learning_rate", c.train.learning_rate}}},
             {"eval",
              {{"auc_mode", std::string(to_string(c.eval.mode))},
               {"ssm",
                {{"window", c.eval.ssm.window},
                 {"sigma", c.eval.ssm.gaussian_sigma},
                 {"c1", c.eval.ssm.c1},
                 {"c2", c.eval.ssm.c2}}}}},
             {"output_dir", c.output_dir}};
}

RunConfig run_config_from_json(const json& j) {
    reject_unknown(j, "", {"seed", "dataset", "model", "train", "eval", "output_dir"});
    RunConfig c;
    read_field(j, "seed", c.seed, "");
    read_field(j, "output_dir", c.output_dir, "");

    if (j.contains("dataset")) {
        const json& d = j.at("dataset");
        reject_unknown(d, "dataset", {"root", "kind", "categories"});
        read_field(d, "root", c.dataset.root, "dataset");
        std::string kind = std::string(to_string(c.dataset.kind));
        read_field(d, "kind", kind, "dataset");
        c.dataset.kind = dataset_kind_from_string(kind);
        read_field(d, "categories", c.dataset.categories, "dataset");
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, "model",
                       {"arch", "z_channels", "latent_spatial", "input_size", "base_width", "channels", "beta",
                        "backbone", "prior", "vit"});
        if (m.contains("prior")) {
            reject_unknown(m.at("prior"), "model.prior", {"type", "kind", "range", "variance", "smoothness", "lattice"});
        }
        if (m.contains("vit")) {
            reject_unknown(m.at("vit"), "model.vit",
                           {"image_size", "patch_size", "embed_dim", "depth", "heads", "mlp_ratio", "channels"});
        }
        try {
            c.model = j.at("model").get<ModelConfig>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("model: ") + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("model: ") + e.what());
        }
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, "train", {"epochs", "batch_size", "learning_rate"});
        read_field(t, "epochs", c.train.epochs, "train");
        read_field(t, "batch_size", c.train.batch_size, "train");
        read_field(t, "learning_rate", c.train.learning_rate, "train");
    }

    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown(e, "eval", {"auc_mode", "ssm"});
        std::string mode = std::string(to_string(c.eval.mode));
        read_field(e, "auc_mode", mode, "eval");
        if (mode == "per_image") {
            c.eval.mode = AucMode::per_image;
        } else if (mode == "pooled") {
            c.eval.mode = AucMode::pooled;
        } else {
            throw ConfigError("eval.auc_mode must be per_image or pooled, got '" + mode + "'");
        }
        if (e.contains("ssm")) {
            const json& s = e.at("ssm");
            reject_unknown(s, "eval.ssm", {"window", "sigma", "c1", "c2"});
            read_field(s, "window", c.eval.ssm.window, "eval.ssm");
            read_field(s, "sigma", c.eval.ssm.gaussian_sigma, "eval.ssm");
            read_field(s, "c1", c.eval.ssm.c1, "eval.ssm");
            read_field(s, "c2", c.eval.ssm.c2, "eval.ssm");
        }
    }
    c.train.seed = c.seed;
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j);
}

std::string content_hash(const std::string& content) {
    const std::string blob = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(blob.data()), blob.size(), digest);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char b : digest) {
        out += hex[b >> 4];
        out += hex[b & 0xF];
    }
    return out;
}

void to_json(json& j, const CategoryRecord& r) {
    j = json{{"name", r.name},
             {"train_entries", r.train_entries},
             {"test_entries", r.test_entries},
             {"checkpoint", r.checkpoint},
             {"loss_csv", r.loss_csv}};
}

void from_json(const json& j, CategoryRecord& r) {
    r.name = j.at("name").get<std::string>();
    r.train_entries = j.value("train_entries", int64_t{0});
    r.test_entries = j.value("test_entries", int64_t{0});
    r.checkpoint = j.value("checkpoint", "");
    r.loss_csv = j.value("loss_csv", "");
}

void to_json(json& j, const RunManifest& m) {
    j = json{{"config", m.config},
             {"seed", m.seed},
             {"dataset_root", m.dataset_root},
             {"dataset_kind", m.dataset_kind},
             {"categories", m.categories},
             {"config_hash", m.config_hash},
             {"started_at", m.started_at},
             {"finished_at", m.finished_at},
             {"metric_outputs", m.metric_outputs},
             {"tool_version", m.tool_version},
             {"mad_definition", m.mad_definition}};
}

void from_json(const json& j, RunManifest& m) {
    m.config = j.at("config");
    m.seed = j.at("seed").get<uint64_t>();
    m.dataset_root = j.at("dataset_root").get<std::string>();
    m.dataset_kind = j.at("dataset_kind").get<std::string>();
    m.categories = j.at("categories").get<std::vector<CategoryRecord>>();
    m.config_hash = j.value("config_hash", "");
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.metric_outputs = j.value("metric_outputs", std::vector<std::string>{});
    m.tool_version = j.value("tool_version", "");
    m.mad_definition = j.value("mad_definition", "");
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << json(manifest).dump(2) << "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open manifest " + path.string());
    try {
        return json::parse(is).get<RunManifest>();
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace vaead
