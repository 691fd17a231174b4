#include "cfdiff/cli/commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>

#include "cfdiff/cli/svg.hpp"
#include "cfdiff/rng.hpp"

namespace fs = std::filesystem;

namespace cfdiff::cli {

namespace {

// Child streams of the master seed.
constexpr std::uint64_t kDatasetStream = 10;
constexpr std::uint64_t kFactualStream = 11;
constexpr std::uint64_t kTargetStream = 12;
constexpr std::uint64_t kEpisodeStream = 13;
constexpr std::uint64_t kPlotStream = 14;

// Child streams of the classifier seed.
constexpr std::uint64_t kTrainDataStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kTestDataStream = 3;
constexpr std::size_t kTestSamples = 2000;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

fs::path out_dir(const ExperimentConfig& cfg) {
    fs::path p(cfg.out);
    fs::create_directories(p);
    return p;
}

std::vector<Vec> decode_all(const AffineCodec& codec, const std::vector<Vec>& zs) {
    std::vector<Vec> out;
    out.reserve(zs.size());
    for (const auto& z : zs) out.push_back(codec.decode(z));
    return out;
}

CounterfactualRecord run_episode(const Experiment& exp, const GuidanceConfig& guidance, const LabeledSamples& facts,
                                 std::size_t i, bool record_trajectory, const StepObserver& observer) {
    const ExperimentConfig& cfg = exp.cfg;
    const Vec& x = facts.points[i];
    const int y_f = predict(exp.classifier, x);
    const int y_cf = select_target_class(x, y_f, exp.world, exp.codec, exp.classifier, cfg.target.mode, cfg.target.k,
                                         derive_seed(derive_seed(cfg.seed, kTargetStream), i), cfg.target.cls);
    CounterfactualRecord rec = generate(exp.context(), x, y_cf, guidance, cfg.t_start_fraction,
                                        derive_seed(derive_seed(cfg.seed, kEpisodeStream), i), record_trajectory,
                                        observer);
    rec.id = i;
    rec.y_true = facts.labels[i];
    return rec;
}

void check_records_fit(const std::vector<CounterfactualRecord>& records, const Experiment& exp) {
    for (const auto& r : records) {
        detail::require(r.x_factual.size() == exp.codec.ambient_dim(),
                        "records: dimension does not match the configured codec");
        detail::require(r.y_target >= 0 && r.y_target < exp.world.class_count(), "records: invalid target class");
        detail::require(r.y_factual >= 0 && r.y_factual < exp.world.class_count(), "records: invalid factual class");
    }
}

Json angles_to_json(const AngleStats& s) {
    return {{"pairs", s.angles.size() + s.degenerate},
            {"degenerate", s.degenerate},
            {"threshold_deg", s.threshold_deg},
            {"fraction_above", s.fraction_above},
            {"bin_width_deg", 5},
            {"histogram", s.histogram}};
}

}  // namespace

MixtureWorld load_world(const WorldSpec& spec) {
    if (!spec.file.empty()) return world_from_json(read_json_file(spec.file));
    return make_world_preset(spec.preset);
}

AffineCodec build_codec(const CodecSpec& spec, int latent_dim) {
    if (spec.identity) {
        detail::require(spec.ambient_dim == 0 || spec.ambient_dim == latent_dim,
                        "codec: identity codec needs ambient_dim equal to the latent dimension");
        return AffineCodec::identity(latent_dim);
    }
    const int ambient = spec.ambient_dim == 0 ? latent_dim : spec.ambient_dim;
    return AffineCodec::make(ambient, latent_dim, spec.seed);
}

NoiseSchedule build_schedule(const ScheduleSpec& spec) {
    return respace(make_schedule(spec.kind, spec.base_steps, spec.ddim_eta), spec.respace_factor);
}

TrainedClassifier train_classifier(const ClassifierSpec& spec, const MixtureWorld& world, const AffineCodec& codec) {
    detail::require(spec.train_samples >= 1, "classifier: train_samples must be >= 1");
    const LabeledSamples train_set =
        sample(world, std::nullopt, static_cast<std::size_t>(spec.train_samples), derive_seed(spec.seed, kTrainDataStream));
    const LabeledSamples test = sample(world, std::nullopt, kTestSamples, derive_seed(spec.seed, kTestDataStream));
    const std::vector<Vec> x_train = decode_all(codec, train_set.points);
    const std::vector<Vec> x_test = decode_all(codec, test.points);

    ModelSpec ms{spec.type, codec.ambient_dim(), world.class_count(), spec.hidden, spec.seed};
    TrainOptions opts{spec.epochs, spec.lr, spec.batch, derive_seed(spec.seed, kShuffleStream)};
    Classifier clf = train(ms, x_train, train_set.labels, opts);

    std::size_t bayes_hits = 0;
    for (std::size_t i = 0; i < test.points.size(); ++i) {
        bayes_hits += bayes_predict(world, test.points[i]) == test.labels[i] ? 1 : 0;
    }
    return {clf, accuracy(clf, x_train, train_set.labels), accuracy(clf, x_test, test.labels),
            double(bayes_hits) / double(test.points.size())};
}

Experiment prepare(const ExperimentConfig& cfg) {
    MixtureWorld world = load_world(cfg.world);
    AffineCodec codec = build_codec(cfg.codec, world.latent_dim());
    Classifier clf = cfg.classifier.checkpoint.empty()
                         ? train_classifier(cfg.classifier, world, codec).model
                         : classifier_from_json(read_json_file(cfg.classifier.checkpoint));
    detail::require(clf.input_dim() == codec.ambient_dim(), "classifier input does not match the ambient dimension");
    detail::require(clf.class_count() == world.class_count(), "classifier class count does not match the world");
    cfg.guidance.validate();
    return Experiment{cfg, std::move(world), std::move(codec), std::move(clf), build_schedule(cfg.schedule)};
}

LabeledSamples sample_factuals(const Experiment& exp, std::size_t n) {
    LabeledSamples s = sample(exp.world, std::nullopt, n, derive_seed(exp.cfg.seed, kFactualStream));
    s.points = decode_all(exp.codec, s.points);
    return s;
}

std::vector<CounterfactualRecord> run_generation(const Experiment& exp, const GuidanceConfig& guidance,
                                                 bool record_trajectories, const StepObserver& observer) {
    const LabeledSamples facts = sample_factuals(exp, exp.cfg.n);
    std::vector<CounterfactualRecord> out(exp.cfg.n);
    parallel_for(exp.cfg.n, [&](std::size_t i) {
        out[i] = run_episode(exp, guidance, facts, i, record_trajectories, observer);
    });
    return out;
}

AngleStats run_angles(const Experiment& exp, double threshold_deg) {
    const LabeledSamples facts = sample_factuals(exp, exp.cfg.n);
    std::vector<std::vector<std::pair<Vec, Vec>>> per_episode(exp.cfg.n);
    parallel_for(exp.cfg.n, [&](std::size_t i) {
        auto& mine = per_episode[i];
        run_episode(exp, exp.cfg.guidance, facts, i, false,
                    [&](std::size_t, const Vec& cls, const Vec& implicit) { mine.emplace_back(cls, implicit); });
    });
    std::vector<std::pair<Vec, Vec>> pairs;
    for (auto& e : per_episode) {
        for (auto& p : e) pairs.push_back(std::move(p));
    }
    return angle_stats(pairs, threshold_deg);
}

std::string records_to_jsonl(const std::vector<CounterfactualRecord>& records) {
    std::string out;
    for (const auto& r : records) out += record_to_json(r).dump() + "\n";
    return out;
}

std::string trajectories_to_jsonl(const std::vector<CounterfactualRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        if (r.trajectory) out += trajectory_to_json(r.id, *r.trajectory).dump() + "\n";
    }
    return out;
}

std::vector<CounterfactualRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<CounterfactualRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(record_from_json(Json::parse(line)));
    }
    if (out.empty()) throw std::invalid_argument("records file '" + path + "' is empty");
    return out;
}

std::vector<std::pair<std::size_t, Trajectory>> read_trajectories(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::vector<std::pair<std::size_t, Trajectory>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const Json j = Json::parse(line);
        out.emplace_back(j.at("id").get<std::size_t>(), trajectory_from_json(j));
    }
    return out;
}

void cmd_world(const ExperimentConfig& cfg, std::ostream& log) {
    const MixtureWorld world = load_world(cfg.world);
    const fs::path dir = out_dir(cfg);
    const LabeledSamples data = sample(world, std::nullopt, cfg.n, derive_seed(cfg.seed, kDatasetStream));

    std::string csv = "label";
    for (int d = 0; d < world.latent_dim(); ++d) csv += ",z" + std::to_string(d);
    csv += "\n";
    for (std::size_t i = 0; i < data.points.size(); ++i) {
        detail::require(data.labels[i] >= 0 && data.labels[i] < world.class_count(), "world: sampled label out of range");
        csv += std::to_string(data.labels[i]);
        for (Eigen::Index d = 0; d < data.points[i].size(); ++d) csv += "," + num(data.points[i][d]);
        csv += "\n";
    }
    write_text_file((dir / "world.json").string(), world_to_json(world).dump(2) + "\n");
    write_text_file((dir / "dataset.csv").string(), csv);
    log << "world: " << world.component_count() << " components, " << world.class_count() << " classes, dim "
        << world.latent_dim() << "; " << data.points.size() << " samples written to " << dir.string() << "\n";
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
    const MixtureWorld world = load_world(cfg.world);
    const AffineCodec codec = build_codec(cfg.codec, world.latent_dim());
    const TrainedClassifier t = train_classifier(cfg.classifier, world, codec);
    const fs::path dir = out_dir(cfg);
    write_text_file((dir / "model.json").string(), classifier_to_json(t.model).dump() + "\n");
    const Json report = {{"train_accuracy", t.train_accuracy},
                         {"test_accuracy", t.test_accuracy},
                         {"bayes_accuracy", t.bayes_accuracy},
                         {"codec", codec_to_json(codec)}};
    write_text_file((dir / "train_report.json").string(), report.dump(2) + "\n");
    log << "train accuracy " << t.train_accuracy << ", test accuracy " << t.test_accuracy
        << ", Bayes oracle accuracy " << t.bayes_accuracy << "\n";
}

void cmd_generate(const ExperimentConfig& cfg, std::ostream& log) {
    const Experiment exp = prepare(cfg);
    const std::vector<CounterfactualRecord> records = run_generation(exp, cfg.guidance, cfg.record_trajectories);
    const fs::path dir = out_dir(cfg);
    write_text_file((dir / "records.jsonl").string(), records_to_jsonl(records));
    if (cfg.record_trajectories) write_text_file((dir / "trajectories.jsonl").string(), trajectories_to_jsonl(records));
    write_text_file((dir / "run_config.json").string(), config_to_json(cfg).dump(2) + "\n");
    if (cfg.emit_plots) {
        if (exp.world.latent_dim() == 2) {
            std::vector<Trajectory> trajs;
            for (const auto& r : records) {
                if (r.trajectory) trajs.push_back(*r.trajectory);
            }
            write_text_file((dir / "scatter.svg").string(),
                            scatter_svg(exp.world, exp.codec, exp.classifier, records, trajs,
                                        derive_seed(cfg.seed, kPlotStream)));
        } else {
            log << "note: plots are only drawn for 2D worlds\n";
        }
    }
    log << "generated " << records.size() << " counterfactuals, flip ratio " << flip_ratio(records, exp.classifier)
        << "\n";
}

void cmd_evaluate(const ExperimentConfig& cfg, const std::string& records_path, std::ostream& log) {
    std::vector<CounterfactualRecord> records = read_records(records_path);
    const Experiment exp = prepare(cfg);
    check_records_fit(records, exp);
    const MetricReport rep = evaluate(records, exp.world, exp.codec, exp.classifier, cfg.evaluation);
    const fs::path dir = out_dir(cfg);
    write_text_file((dir / "metrics.csv").string(), metric_csv_header() + "\n" + metric_csv_row(rep) + "\n");
    write_text_file((dir / "metrics.json").string(), report_to_json(rep).dump(2) + "\n");
    write_text_file((dir / "records_evaluated.jsonl").string(), records_to_jsonl(records));
    log << metric_csv_header() << "\n" << metric_csv_row(rep) << "\n";
}

void cmd_angles(const ExperimentConfig& cfg, std::ostream& log) {
    const Experiment exp = prepare(cfg);
    const AngleStats stats = run_angles(exp);
    const fs::path dir = out_dir(cfg);
    write_text_file((dir / "angles.json").string(), angles_to_json(stats).dump(2) + "\n");
    std::string csv = "bin_lo_deg,bin_hi_deg,count\n";
    for (int b = 0; b < kAngleBins; ++b) {
        csv += std::to_string(5 * b) + "," + std::to_string(5 * (b + 1)) + "," +
               std::to_string(stats.histogram[static_cast<std::size_t>(b)]) + "\n";
    }
    write_text_file((dir / "angles_histogram.csv").string(), csv);
    if (cfg.emit_plots) {
        write_text_file((dir / "angles.svg").string(),
                        angle_histogram_svg(stats.histogram, stats.threshold_deg, stats.fraction_above));
    }
    log << "angle pairs " << stats.angles.size() << " (+" << stats.degenerate << " degenerate), fraction above "
        << stats.threshold_deg << " deg: " << stats.fraction_above << "\n";
}

void cmd_plot(const ExperimentConfig& cfg, const std::string& records_path, const std::string& trajectories_path,
              const std::string& angles_path, std::ostream& log) {
    const std::vector<CounterfactualRecord> records = read_records(records_path);
    const Experiment exp = prepare(cfg);
    check_records_fit(records, exp);
    const fs::path dir = out_dir(cfg);

    std::vector<Trajectory> trajs;
    if (!trajectories_path.empty()) {
        for (auto& [id, t] : read_trajectories(trajectories_path)) trajs.push_back(std::move(t));
    }
    if (exp.world.latent_dim() == 2) {
        write_text_file((dir / "scatter.svg").string(),
                        scatter_svg(exp.world, exp.codec, exp.classifier, records, trajs,
                                    derive_seed(cfg.seed, kPlotStream)));
    } else {
        write_text_file((dir / "plots_note.txt").string(),
                        "scatter plots are drawn only for 2D worlds; this world has dimension " +
                            std::to_string(exp.world.latent_dim()) + "\n");
        log << "note: world is not 2D, scatter plot skipped\n";
    }

    std::vector<CoutCurve> curves;
    const int steps = cfg.evaluation.cout_steps > 0 ? cfg.evaluation.cout_steps : exp.codec.ambient_dim();
    for (std::size_t i = 0; i < records.size() && i < 20; ++i) {
        const auto& r = records[i];
        curves.push_back(cout_curve(r.x_factual, r.x_counterfactual, exp.classifier, r.y_factual, r.y_target, steps));
    }
    write_text_file((dir / "cout.svg").string(), cout_curves_svg(curves));

    if (!angles_path.empty()) {
        const Json a = read_json_file(angles_path);
        write_text_file((dir / "angles.svg").string(),
                        angle_histogram_svg(a.at("histogram").get<std::vector<std::size_t>>(),
                                            a.at("threshold_deg").get<double>(), a.at("fraction_above").get<double>()));
    }
    log << "plots written to " << dir.string() << "\n";
}

void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    const Experiment exp = prepare(cfg);
    std::string csv = "gamma,lambda_c,lambda_d," + metric_csv_header() + "\n";
    for (double gamma : cfg.sweep.gamma) {
        for (double lc : cfg.sweep.lambda_c) {
            for (double ld : cfg.sweep.lambda_d) {
                GuidanceConfig g = cfg.guidance;
                g.gamma_deg = gamma;
                g.lambda_c = lc;
                g.lambda_d = ld;
                std::vector<CounterfactualRecord> records = run_generation(exp, g, false);
                const MetricReport rep = evaluate(records, exp.world, exp.codec, exp.classifier, cfg.evaluation);
                const std::string row = num(gamma) + "," + num(lc) + "," + num(ld) + "," + metric_csv_row(rep);
                csv += row + "\n";
                log << row << "\n";
            }
        }
    }
    write_text_file((out_dir(cfg) / "sweep.csv").string(), csv);
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"cfdiff: consensus-guided diffusion counterfactuals on Gaussian-mixture worlds"};
    app.require_subcommand(1);

    std::string config_path, out_path, preset, records_path, trajectories_path, angles_path;
    std::uint64_t seed = 0;
    std::vector<CLI::Option*> seed_opts;

    auto common = [&](CLI::App* sub, const std::string& preset_help) {
        sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
        sub->add_option("--out", out_path, "output directory (overrides config)");
        seed_opts.push_back(sub->add_option("--seed", seed, "master seed (overrides config)"));
        sub->add_option("--preset", preset, preset_help);
        return sub;
    };
    const std::string guidance_help = "guidance preset name";
    auto* world = common(app.add_subcommand("world", "materialize a world and a seeded dataset"), "world preset name");
    auto* train_cmd = common(app.add_subcommand("train", "train and checkpoint the target classifier"), guidance_help);
    auto* gen = common(app.add_subcommand("generate", "generate counterfactual records"), guidance_help);
    auto* eval = common(app.add_subcommand("evaluate", "compute the metric report for a records file"), guidance_help);
    auto* angles = common(app.add_subcommand("angles", "log gradient angle statistics"), guidance_help);
    auto* plot = common(app.add_subcommand("plot", "draw SVG plots from records"), guidance_help);
    auto* sweep = common(app.add_subcommand("sweep", "grid over gamma, lambda_c and lambda_d"), guidance_help);
    eval->add_option("--records", records_path, "records JSONL")->required();
    plot->add_option("--records", records_path, "records JSONL")->required();
    plot->add_option("--trajectories", trajectories_path, "trajectory JSONL");
    plot->add_option("--angles", angles_path, "angles.json from the angles command");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
        if (!out_path.empty()) cfg.out = out_path;
        for (auto* o : seed_opts) {
            if (o->count() > 0) cfg.seed = seed;
        }
        if (!preset.empty()) {
            if (world->parsed()) {
                (void)make_world_preset(preset);
                cfg.world = WorldSpec{preset, {}};
            } else {
                apply_guidance_preset(cfg, preset);
            }
        }

        if (world->parsed()) cmd_world(cfg, out);
        if (train_cmd->parsed()) cmd_train(cfg, out);
        if (gen->parsed()) cmd_generate(cfg, out);
        if (eval->parsed()) cmd_evaluate(cfg, records_path, out);
        if (angles->parsed()) cmd_angles(cfg, out);
        if (plot->parsed()) cmd_plot(cfg, records_path, trajectories_path, angles_path, out);
        if (sweep->parsed()) cmd_sweep(cfg, out);
        return 0;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace cfdiff::cli
