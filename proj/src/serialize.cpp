#include "cfdiff/serialize.hpp"

#include <algorithm>

namespace cfdiff {

namespace {

template <class T>
void read_if(const Json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
Json opt(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

template <class T>
std::optional<T> opt_from(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

}  // namespace

void reject_unknown_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
        if (!known) throw std::invalid_argument(where + ": unknown key '" + item.key() + "'");
    }
}

Json vec_to_json(const Vec& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Vec vec_from_json(const Json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json mat_to_json(const Mat& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(vec_to_json(m.row(r).transpose()));
    return out;
}

Mat mat_from_json(const Json& j) {
    if (!j.is_array() || j.empty()) throw std::invalid_argument("matrix: expected non-empty nested array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Vec row = vec_from_json(j.at(static_cast<std::size_t>(r)));
        detail::require(row.size() == cols, "matrix: ragged rows");
        m.row(r) = row.transpose();
    }
    return m;
}

Json world_to_json(const MixtureWorld& world) {
    Json comps = Json::array();
    for (const auto& c : world.components()) {
        comps.push_back({{"mean", vec_to_json(c.mean)},
                         {"variance", c.variance},
                         {"weight", c.weight},
                         {"class", c.class_label},
                         {"attributes", c.attributes}});
    }
    return {{"latent_dim", world.latent_dim()}, {"components", comps}};
}

MixtureWorld world_from_json(const Json& j) {
    reject_unknown_keys(j, {"latent_dim", "components"}, "world");
    std::vector<MixtureComponent> comps;
    for (const auto& c : j.at("components")) {
        reject_unknown_keys(c, {"mean", "variance", "weight", "class", "attributes"}, "world component");
        MixtureComponent mc;
        mc.mean = vec_from_json(c.at("mean"));
        mc.variance = c.at("variance").get<double>();
        mc.weight = c.at("weight").get<double>();
        mc.class_label = c.at("class").get<int>();
        read_if(c, "attributes", mc.attributes);
        comps.push_back(std::move(mc));
    }
    return MixtureWorld(std::move(comps), j.at("latent_dim").get<int>());
}

Json codec_to_json(const AffineCodec& codec) {
    return {{"ambient_dim", codec.ambient_dim()},
            {"latent_dim", codec.latent_dim()},
            {"seed", codec.seed()},
            {"identity", codec.is_identity()}};
}

AffineCodec codec_from_json(const Json& j) {
    reject_unknown_keys(j, {"ambient_dim", "latent_dim", "seed", "identity"}, "codec");
    if (j.value("identity", false)) {
        const int dim = j.at("latent_dim").get<int>();
        if (j.contains("ambient_dim") && j.at("ambient_dim").get<int>() != dim) {
            throw std::invalid_argument("codec: identity codec needs ambient_dim == latent_dim");
        }
        return AffineCodec::identity(dim);
    }
    return AffineCodec::make(j.at("ambient_dim").get<int>(), j.at("latent_dim").get<int>(),
                             j.value("seed", std::uint64_t{0}));
}

Json classifier_to_json(const Classifier& clf) {
    Json params;
    if (const auto* m = std::get_if<LinearSoftmax>(&clf.model())) {
        params = {{"weights", mat_to_json(m->weights)}, {"biases", vec_to_json(m->biases)}};
    } else {
        const auto& mlp = std::get<Mlp1>(clf.model());
        params = {{"W1", mat_to_json(mlp.W1)},
                  {"b1", vec_to_json(mlp.b1)},
                  {"W2", mat_to_json(mlp.W2)},
                  {"b2", vec_to_json(mlp.b2)}};
    }
    return {{"type", to_string(clf.type())},
            {"dims", {{"input", clf.input_dim()}, {"classes", clf.class_count()}, {"hidden", clf.hidden()}}},
            {"seed", clf.seed()},
            {"params", params}};
}

Classifier classifier_from_json(const Json& j) {
    reject_unknown_keys(j, {"type", "dims", "seed", "params"}, "classifier checkpoint");
    const ModelType type = model_type_from_string(j.at("type").get<std::string>());
    const auto& p = j.at("params");
    const auto seed = j.value("seed", std::uint64_t{0});
    Classifier clf = type == ModelType::Linear
                         ? Classifier(LinearSoftmax{mat_from_json(p.at("weights")), vec_from_json(p.at("biases"))}, seed)
                         : Classifier(Mlp1{mat_from_json(p.at("W1")), vec_from_json(p.at("b1")),
                                           mat_from_json(p.at("W2")), vec_from_json(p.at("b2"))},
                                      seed);
    const auto& dims = j.at("dims");
    if (dims.at("input").get<int>() != clf.input_dim() || dims.at("classes").get<int>() != clf.class_count()) {
        throw std::invalid_argument("classifier checkpoint: header dims disagree with parameters");
    }
    return clf;
}

Json guidance_to_json(const GuidanceConfig& c) {
    return {{"eta", c.eta},
            {"lambda_c", c.lambda_c},
            {"lambda_d", c.lambda_d},
            {"gamma_deg", c.gamma_deg},
            {"block_size", c.block_size},
            {"overwrite", c.overwrite},
            {"distance", to_string(c.distance)},
            {"mode", to_string(c.mode)},
            {"cone_alpha_deg", c.cone_alpha_deg},
            {"cone_aligned_returns_w", c.cone_aligned_returns_w},
            {"grad_through_score", c.grad_through_score}};
}

GuidanceConfig guidance_from_json(const Json& j, GuidanceConfig c) {
    reject_unknown_keys(j,
                        {"eta", "lambda_c", "lambda_d", "gamma_deg", "block_size", "overwrite", "distance", "mode",
                         "cone_alpha_deg", "cone_aligned_returns_w", "grad_through_score"},
                        "guidance");
    read_if(j, "eta", c.eta);
    read_if(j, "lambda_c", c.lambda_c);
    read_if(j, "lambda_d", c.lambda_d);
    read_if(j, "gamma_deg", c.gamma_deg);
    read_if(j, "block_size", c.block_size);
    if (j.contains("overwrite")) {
        const auto& o = j.at("overwrite");
        c.overwrite = o.is_number() ? std::vector<double>{o.get<double>()} : o.get<std::vector<double>>();
    }
    if (j.contains("distance")) c.distance = distance_kind_from_string(j.at("distance").get<std::string>());
    if (j.contains("mode")) c.mode = guidance_mode_from_string(j.at("mode").get<std::string>());
    read_if(j, "cone_alpha_deg", c.cone_alpha_deg);
    read_if(j, "cone_aligned_returns_w", c.cone_aligned_returns_w);
    read_if(j, "grad_through_score", c.grad_through_score);
    c.validate();
    return c;
}

Json schedule_to_json(const NoiseSchedule& s) {
    return {{"kind", to_string(s.kind)},
            {"base_steps", s.base_steps},
            {"respace_factor", s.respace_factor},
            {"ddim_eta", s.ddim_eta}};
}

Json record_to_json(const CounterfactualRecord& r) {
    const SampleMetrics& m = r.metrics;
    return {{"id", r.id},
            {"seed", r.seed},
            {"y_factual", r.y_factual},
            {"y_true", opt(r.y_true)},
            {"y_target", r.y_target},
            {"t_start_fraction", r.t_start_fraction},
            {"t_start", r.t_start},
            {"x_factual", vec_to_json(r.x_factual)},
            {"x_counterfactual", vec_to_json(r.x_counterfactual)},
            {"config", guidance_to_json(r.config)},
            {"metrics",
             {{"flipped", opt(m.flipped)},
              {"cout", opt(m.cout)},
              {"l1", opt(m.l1)},
              {"l2", opt(m.l2)},
              {"feat_sim", opt(m.feat_sim)},
              {"bayes_target_posterior", opt(m.bayes_target_posterior)}}}};
}

CounterfactualRecord record_from_json(const Json& j) {
    reject_unknown_keys(j,
                        {"id", "seed", "y_factual", "y_true", "y_target", "t_start_fraction", "t_start", "x_factual",
                         "x_counterfactual", "config", "metrics"},
                        "record");
    CounterfactualRecord r;
    r.id = j.at("id").get<std::size_t>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.y_factual = j.at("y_factual").get<int>();
    r.y_true = opt_from<int>(j, "y_true");
    r.y_target = j.at("y_target").get<int>();
    read_if(j, "t_start_fraction", r.t_start_fraction);
    read_if(j, "t_start", r.t_start);
    r.x_factual = vec_from_json(j.at("x_factual"));
    r.x_counterfactual = vec_from_json(j.at("x_counterfactual"));
    detail::require(r.x_factual.size() == r.x_counterfactual.size(), "record: factual and counterfactual differ in size");
    if (j.contains("config")) r.config = guidance_from_json(j.at("config"));
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        r.metrics.flipped = opt_from<bool>(m, "flipped");
        r.metrics.cout = opt_from<double>(m, "cout");
        r.metrics.l1 = opt_from<double>(m, "l1");
        r.metrics.l2 = opt_from<double>(m, "l2");
        r.metrics.feat_sim = opt_from<double>(m, "feat_sim");
        r.metrics.bayes_target_posterior = opt_from<double>(m, "bayes_target_posterior");
    }
    return r;
}

Json trajectory_to_json(std::size_t id, const Trajectory& t) {
    Json steps = Json::array();
    for (const auto& s : t.steps) {
        steps.push_back({{"t", s.t},
                         {"z_t", vec_to_json(s.z_t)},
                         {"x0_hat", vec_to_json(s.x0_hat)},
                         {"logits", vec_to_json(s.logits)},
                         {"consensus_pass_fraction", s.consensus_pass_fraction}});
    }
    return {{"id", id}, {"steps", steps}};
}

Trajectory trajectory_from_json(const Json& j) {
    Trajectory t;
    for (const auto& s : j.at("steps")) {
        TrajectoryStep step;
        step.t = s.at("t").get<int>();
        step.z_t = vec_from_json(s.at("z_t"));
        step.x0_hat = vec_from_json(s.at("x0_hat"));
        step.logits = vec_from_json(s.at("logits"));
        step.consensus_pass_fraction = s.at("consensus_pass_fraction").get<double>();
        t.steps.push_back(std::move(step));
    }
    return t;
}

Json report_to_json(const MetricReport& r) {
    return {{"n", r.n},
            {"flip_ratio", r.flip_ratio},
            {"cout_mean", r.cout_mean},
            {"l1_mean", r.l1_mean},
            {"l2_mean", r.l2_mean},
            {"feat_sim_mean", r.feat_sim_mean},
            {"frechet", opt(r.frechet)},
            {"split_frechet", opt(r.split_frechet)},
            {"mnac_mean", opt(r.mnac_mean)},
            {"cd_mean", opt(r.cd_mean)}};
}

}  // namespace cfdiff
