#include "cfdiff/cli/config.hpp"

#include <fstream>
#include <sstream>

namespace cfdiff::cli {

namespace {

template <class T>
void read_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

std::vector<double> number_list(const Json& j) {
    if (j.is_number()) return {j.get<double>()};
    auto v = j.get<std::vector<double>>();
    detail::require(!v.empty(), "sweep: axis lists must be non-empty");
    return v;
}

}  // namespace

void apply_classifier_preset(ClassifierSpec& spec, const std::string& name) {
    if (name == "linear-default") {
        spec.type = ModelType::Linear;
        spec.epochs = 50;
        spec.lr = 0.1;
        spec.batch = 32;
        spec.train_samples = 1000;
    } else if (name == "overfit-mlp") {
        // Deliberately over-parameterized for its data: the vulnerable target.
        spec.type = ModelType::Mlp;
        spec.hidden = 64;
        spec.epochs = 500;
        spec.lr = 0.1;
        spec.batch = 32;
        spec.train_samples = 200;
    } else {
        throw std::invalid_argument("unknown classifier preset '" + name + "'");
    }
    spec.preset = name;
}

void apply_guidance_preset(ExperimentConfig& cfg, const std::string& name) {
    const GuidancePreset& p = guidance_preset(name);
    cfg.guidance_preset = name;
    cfg.guidance = p.config;
    cfg.t_start_fraction = p.t_start_fraction;
}

ExperimentConfig config_from_json(const Json& j) {
    reject_unknown_keys(j,
                        {"schema", "world", "codec", "classifier", "schedule", "guidance", "t_start_fraction", "target",
                         "n", "seed", "out", "record_trajectories", "emit_plots", "evaluation", "sweep"},
                        "config");
    if (!j.contains("schema") || j.at("schema") != kSchemaVersion) {
        throw std::invalid_argument("config: expected \"schema\": " + std::to_string(kSchemaVersion));
    }
    ExperimentConfig cfg;
    apply_guidance_preset(cfg, cfg.guidance_preset);

    if (j.contains("world")) {
        const auto& w = j.at("world");
        reject_unknown_keys(w, {"preset", "file"}, "config.world");
        read_if(w, "preset", cfg.world.preset);
        read_if(w, "file", cfg.world.file);
    }
    if (j.contains("codec")) {
        const auto& c = j.at("codec");
        reject_unknown_keys(c, {"identity", "ambient_dim", "seed"}, "config.codec");
        read_if(c, "identity", cfg.codec.identity);
        read_if(c, "ambient_dim", cfg.codec.ambient_dim);
        read_if(c, "seed", cfg.codec.seed);
    }
    if (j.contains("classifier")) {
        const auto& c = j.at("classifier");
        reject_unknown_keys(
            c, {"preset", "type", "hidden", "epochs", "lr", "batch", "train_samples", "seed", "checkpoint"},
            "config.classifier");
        if (c.contains("preset")) apply_classifier_preset(cfg.classifier, c.at("preset").get<std::string>());
        if (c.contains("type")) cfg.classifier.type = model_type_from_string(c.at("type").get<std::string>());
        read_if(c, "hidden", cfg.classifier.hidden);
        read_if(c, "epochs", cfg.classifier.epochs);
        read_if(c, "lr", cfg.classifier.lr);
        read_if(c, "batch", cfg.classifier.batch);
        read_if(c, "train_samples", cfg.classifier.train_samples);
        read_if(c, "seed", cfg.classifier.seed);
        read_if(c, "checkpoint", cfg.classifier.checkpoint);
    }
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        reject_unknown_keys(s, {"kind", "base_steps", "respace_factor", "ddim_eta"}, "config.schedule");
        if (s.contains("kind")) cfg.schedule.kind = schedule_kind_from_string(s.at("kind").get<std::string>());
        read_if(s, "base_steps", cfg.schedule.base_steps);
        read_if(s, "respace_factor", cfg.schedule.respace_factor);
        read_if(s, "ddim_eta", cfg.schedule.ddim_eta);
    }
    if (j.contains("guidance")) {
        Json g = j.at("guidance");
        if (!g.is_object()) throw std::invalid_argument("config.guidance: expected an object");
        if (g.contains("preset")) {
            apply_guidance_preset(cfg, g.at("preset").get<std::string>());
            g.erase("preset");
        }
        cfg.guidance = guidance_from_json(g, cfg.guidance);
    }
    read_if(j, "t_start_fraction", cfg.t_start_fraction);
    if (j.contains("target")) {
        const auto& t = j.at("target");
        reject_unknown_keys(t, {"mode", "k", "class"}, "config.target");
        if (t.contains("mode")) cfg.target.mode = target_mode_from_string(t.at("mode").get<std::string>());
        read_if(t, "k", cfg.target.k);
        if (t.contains("class")) cfg.target.cls = t.at("class").get<int>();
    }
    read_if(j, "n", cfg.n);
    read_if(j, "seed", cfg.seed);
    read_if(j, "out", cfg.out);
    read_if(j, "record_trajectories", cfg.record_trajectories);
    read_if(j, "emit_plots", cfg.emit_plots);
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        reject_unknown_keys(e, {"cout_steps", "beta", "cd_query", "frechet_space"}, "config.evaluation");
        read_if(e, "cout_steps", cfg.evaluation.cout_steps);
        read_if(e, "beta", cfg.evaluation.beta);
        read_if(e, "cd_query", cfg.evaluation.cd_query);
        if (e.contains("frechet_space")) {
            const auto s = e.at("frechet_space").get<std::string>();
            if (s == "ambient") {
                cfg.evaluation.frechet_space = FrechetSpace::Ambient;
            } else if (s == "features") {
                cfg.evaluation.frechet_space = FrechetSpace::Features;
            } else {
                throw std::invalid_argument("config.evaluation: frechet_space must be ambient or features");
            }
        }
    }
    if (j.contains("sweep")) {
        const auto& s = j.at("sweep");
        reject_unknown_keys(s, {"gamma", "lambda_c", "lambda_d"}, "config.sweep");
        if (s.contains("gamma")) cfg.sweep.gamma = number_list(s.at("gamma"));
        if (s.contains("lambda_c")) cfg.sweep.lambda_c = number_list(s.at("lambda_c"));
        if (s.contains("lambda_d")) cfg.sweep.lambda_d = number_list(s.at("lambda_d"));
    }

    detail::require(cfg.n >= 1, "config: n must be >= 1");
    detail::require(cfg.t_start_fraction >= 0.0 && cfg.t_start_fraction <= 1.0,
                    "config: t_start_fraction must lie in [0,1]");
    if (cfg.world.file.empty()) (void)make_world_preset(cfg.world.preset);  // validates the name
    return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
    Json target = {{"mode", to_string(cfg.target.mode)}, {"k", cfg.target.k}};
    if (cfg.target.cls) target["class"] = *cfg.target.cls;
    Json guidance = guidance_to_json(cfg.guidance);
    return {{"schema", kSchemaVersion},
            {"world", {{"preset", cfg.world.preset}, {"file", cfg.world.file}}},
            {"codec", {{"identity", cfg.codec.identity}, {"ambient_dim", cfg.codec.ambient_dim}, {"seed", cfg.codec.seed}}},
            {"classifier",
             {{"type", to_string(cfg.classifier.type)},
              {"hidden", cfg.classifier.hidden},
              {"epochs", cfg.classifier.epochs},
              {"lr", cfg.classifier.lr},
              {"batch", cfg.classifier.batch},
              {"train_samples", cfg.classifier.train_samples},
              {"seed", cfg.classifier.seed},
              {"checkpoint", cfg.classifier.checkpoint}}},
            {"schedule",
             {{"kind", to_string(cfg.schedule.kind)},
              {"base_steps", cfg.schedule.base_steps},
              {"respace_factor", cfg.schedule.respace_factor},
              {"ddim_eta", cfg.schedule.ddim_eta}}},
            {"guidance", guidance},
            {"t_start_fraction", cfg.t_start_fraction},
            {"target", target},
            {"n", cfg.n},
            {"seed", cfg.seed},
            {"out", cfg.out},
            {"record_trajectories", cfg.record_trajectories},
            {"emit_plots", cfg.emit_plots},
            {"evaluation",
             {{"cout_steps", cfg.evaluation.cout_steps},
              {"beta", cfg.evaluation.beta},
              {"cd_query", cfg.evaluation.cd_query},
              {"frechet_space", cfg.evaluation.frechet_space == FrechetSpace::Ambient ? "ambient" : "features"}}},
            {"sweep", {{"gamma", cfg.sweep.gamma}, {"lambda_c", cfg.sweep.lambda_c}, {"lambda_d", cfg.sweep.lambda_d}}}};
}

Json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw std::invalid_argument("'" + path + "' is not valid JSON: " + e.what());
    }
}

ExperimentConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

}  // namespace cfdiff::cli
