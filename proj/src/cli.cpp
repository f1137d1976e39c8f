#include "kbid/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace kbid {

namespace {

PipelineConfig cell_config(ReducerKind reducer, Classifier classifier, bool quantile,
                           ClusterMethod cluster, int dims) {
    PipelineConfig c;
    c.reducer = reducer;
    c.classifier = classifier;
    c.quantile = quantile;
    c.cluster = cluster;
    c.dims = dims;
    return c;
}

std::vector<ExperimentCell> method_cells(int dims) {
    std::vector<ExperimentCell> cells;
    for (auto reducer : {ReducerKind::PCA, ReducerKind::KPCA, ReducerKind::TSNE}) {
        for (auto classifier : {Classifier::NN, Classifier::UNLOC}) {
            ExperimentCell cell;
            cell.label = reducer_name(reducer) + "+" + classifier_name(classifier);
            cell.config = cell_config(reducer, classifier, true, ClusterMethod::XMEANS, dims);
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

}  // namespace

ExperimentGrid experiment_preset(const std::string& name) {
    ExperimentGrid grid;
    if (name == "table1") {
        grid.sample_sizes = {10, 20, 30, 40, 50};
        grid.user_counts = {4};
        for (auto method : {ClusterMethod::DBSCAN, ClusterMethod::GMM, ClusterMethod::XMEANS}) {
            for (bool quantile : {false, true}) {
                ExperimentCell cell;
                cell.label = cluster_method_name(method) + (quantile ? "-q" : "-raw");
                cell.config =
                    cell_config(ReducerKind::PCA, Classifier::NN, quantile, method, 2);
                grid.cells.push_back(std::move(cell));
            }
        }
        return grid;
    }
    if (name == "table3" || name == "table4") {
        grid.sample_sizes = {10, 20, 30, 40, 50};
        grid.user_counts = {4};
        grid.cells = method_cells(2);
        return grid;
    }
    if (name == "table5") {
        grid.sample_sizes = {50};
        grid.user_counts = {3, 4, 5, 6};
        grid.split_modes = {SplitSpec::Mode::INTRA_SESSION, SplitSpec::Mode::INTER_SESSION};
        grid.cells = method_cells(2);
        return grid;
    }
    throw std::invalid_argument("unknown preset: " + name);
}

ColumnMap default_column_map(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot read file: " + csv_path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty file: " + csv_path);
    if (!header.empty() && header.back() == '\r') header.pop_back();

    ColumnMap map;
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
        if (col == "user" || col == "subject") map.user_col = col;
        else if (col == "session" || col == "sessionIndex") map.session_col = col;
        else if (col == "rep") map.rep_col = col;
        else map.timing_cols.push_back(col);
    }
    require(!map.user_col.empty(), "header has no user/subject column: " + csv_path);
    require(!map.session_col.empty(), "header has no session column: " + csv_path);
    require(!map.timing_cols.empty(), "header has no timing columns: " + csv_path);
    return map;
}

Dataset load_dataset(const std::string& path, const std::string& format) {
    if (format == "cmu") return load_cmu(path);
    if (format == "mobikey" || format == "generic") {
        Dataset ds = load_mobikey(path, default_column_map(path));
        ds.source = format == "mobikey" ? DatasetSource::MOBIKEY : DatasetSource::GENERIC;
        return ds;
    }
    throw std::invalid_argument("unknown format: " + format);
}

namespace {

struct CommonArgs {
    std::string input;
    std::string out;
    std::string config_path;
    std::string format = "cmu";
    std::uint64_t seed = 1;
    int jobs = 1;
};

nlohmann::json load_config_file(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    nlohmann::json j;
    in >> j;
    require(j.is_object(), "config file must hold a JSON object: " + path);
    return j;
}

// scan for --config before CLI11 runs so file values become flag defaults
std::string preparse_config_path(int argc, const char* const* argv) {
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) return argv[i + 1];
        if (a.rfind("--config=", 0) == 0) return a.substr(9);
    }
    return "";
}

void add_pipeline_flags(CLI::App* cmd, PipelineConfig& cfg, std::string& reducer,
                        std::string& cluster, std::string& classifier, bool& no_quantile) {
    cmd->add_option("--reducer", reducer, "pca, kpca, or tsne")
        ->check(CLI::IsMember({"pca", "kpca", "tsne"}));
    cmd->add_option("--cluster", cluster, "dbscan, gmm, or xmeans")
        ->check(CLI::IsMember({"dbscan", "gmm", "xmeans"}));
    cmd->add_option("--classifier", classifier, "nn or unloc")
        ->check(CLI::IsMember({"nn", "unloc"}));
    cmd->add_flag("--no-quantile", no_quantile, "skip the quantile transform");
    cmd->add_option("--dims", cfg.dims, "reduced dimensionality");
}

int cmd_ingest(const CommonArgs& args) {
    Dataset ds = load_dataset(args.input, args.format);
    std::cout << "loaded " << ds.samples.size() << " samples, " << ds.users().size()
              << " users, " << ds.feature_count() << " features\n";
    if (!args.out.empty()) {
        save_csv(ds, args.out);
        std::cout << "wrote " << args.out << "\n";
    }
    return 0;
}

int cmd_train(const CommonArgs& args, PipelineConfig cfg, int sample_size, int n_users) {
    Dataset ds = load_dataset(args.input, args.format);
    if (n_users > 0) ds = select_users(ds, static_cast<std::size_t>(n_users), args.seed);
    if (sample_size > 0)
        ds = subsample_per_user(ds, static_cast<std::size_t>(sample_size),
                                Rng(args.seed).fork(1).seed());

    cfg.seed = args.seed;
    TrainedModel model = train(ds.features(), cfg);
    model.feature_names = ds.feature_names;

    std::cout << "config: " << cfg.to_json().dump() << "\n";
    std::cout << "trained on " << ds.samples.size() << " samples: " << model.k
              << " clusters, train ARI " << model.train_ari << "\n";
    for (int c = 0; c < model.k; ++c) {
        std::cout << "  cluster " << c << " -> " << model.cluster_user[static_cast<std::size_t>(c)];
        if (!model.cluster_matched[static_cast<std::size_t>(c)]) std::cout << " (no user matched)";
        std::cout << "\n";
    }
    if (!args.out.empty()) {
        model.save(args.out);
        std::cout << "wrote " << args.out << "\n";
    }
    return 0;
}

int cmd_identify(const std::string& model_path, const CommonArgs& args) {
    TrainedModel model = TrainedModel::load(model_path);
    Dataset ds = load_dataset(args.input, args.format);
    FeatureMatrix m = ds.features();

    auto results = identify(model, m.values);

    int correct = 0, labeled = 0;
    std::ostringstream body;
    body << "row,user,predicted,cluster,ambiguous\n";
    for (std::size_t i = 0; i < results.size(); ++i) {
        const std::string& truth = m.user_ids[i];
        body << i << ',' << truth << ',' << results[i].predicted_user << ','
             << results[i].cluster << ',' << (results[i].ambiguous ? 1 : 0) << '\n';
        if (!truth.empty()) {
            ++labeled;
            if (results[i].predicted_user == truth) ++correct;
        }
    }

    if (!args.out.empty()) {
        std::ofstream out(args.out);
        if (!out) throw std::runtime_error("cannot write file: " + args.out);
        out << "# config: " << model.config.to_json().dump() << "\n" << body.str();
        std::cout << "wrote " << args.out << "\n";
    } else {
        std::cout << body.str();
    }
    if (labeled > 0)
        std::cout << "accuracy: " << static_cast<double>(correct) / labeled << " (" << correct
                  << "/" << labeled << ")\n";
    return 0;
}

int cmd_experiment(const CommonArgs& args, const nlohmann::json& file_cfg,
                   const std::string& preset, PipelineConfig single_cfg, int sample_size,
                   int n_users, const std::string& session_mode, bool have_session_mode) {
    Dataset ds = load_dataset(args.input, args.format);

    ExperimentGrid grid;
    if (!preset.empty()) {
        grid = experiment_preset(preset);
    } else {
        ExperimentCell cell;
        cell.label = reducer_name(single_cfg.reducer) + "+" +
                     classifier_name(single_cfg.classifier);
        cell.config = single_cfg;
        grid.cells.push_back(std::move(cell));
    }
    if (sample_size > 0) grid.sample_sizes = {sample_size};
    if (n_users > 0) grid.user_counts = {n_users};
    if (have_session_mode) grid.split_modes = {split_mode_from_name(session_mode)};
    grid.trials = file_cfg.value("trials", grid.trials);
    grid.train_fraction = file_cfg.value("train_fraction", grid.train_fraction);
    grid.outlier_k = file_cfg.value("outlier_k", grid.outlier_k);
    grid.seed = args.seed;
    grid.jobs = args.jobs;

    ExperimentReport report = run_experiment(ds, grid);

    nlohmann::json grid_json;
    grid_json["sample_sizes"] = grid.sample_sizes;
    grid_json["user_counts"] = grid.user_counts;
    {
        std::vector<std::string> modes;
        for (auto m : grid.split_modes) modes.push_back(split_mode_name(m));
        grid_json["split_modes"] = modes;
    }
    {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& c : grid.cells)
            cells.push_back({{"label", c.label}, {"config", c.config.to_json()}});
        grid_json["cells"] = cells;
    }
    grid_json["train_fraction"] = grid.train_fraction;
    grid_json["outlier_k"] = grid.outlier_k;
    grid_json["trials"] = grid.trials;
    grid_json["seed"] = grid.seed;

    std::cout << report.render_table();

    int n_skipped = 0;
    for (const auto& r : report.records)
        if (r.skipped) ++n_skipped;
    if (n_skipped > 0)
        std::cout << n_skipped << " of " << report.records.size()
                  << " trial runs skipped; see the records for reasons\n";

    if (!args.out.empty()) {
        report.save_csv(args.out + ".csv");
        nlohmann::json out_json;
        out_json["grid"] = grid_json;
        out_json["report"] = report.to_json();
        std::ofstream out(args.out + ".json");
        if (!out) throw std::runtime_error("cannot write file: " + args.out + ".json");
        out << out_json.dump(2) << '\n';
        std::cout << "wrote " << args.out << ".csv and " << args.out << ".json\n";
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    try {
        nlohmann::json file_cfg = load_config_file(preparse_config_path(argc, argv));
        PipelineConfig base_cfg = PipelineConfig::from_json(file_cfg);

        CLI::App app{"keystroke-dynamics user identification"};
        app.require_subcommand(1);

        CommonArgs common;
        common.format = file_cfg.value("format", common.format);
        common.seed = file_cfg.value("seed", common.seed);
        common.jobs = file_cfg.value("jobs", common.jobs);
        std::string config_dummy;

        std::string reducer = reducer_name(base_cfg.reducer);
        std::string cluster = cluster_method_name(base_cfg.cluster);
        std::string classifier = classifier_name(base_cfg.classifier);
        bool no_quantile = !base_cfg.quantile;
        int sample_size = file_cfg.value("sample_size", 0);
        int n_users = file_cfg.value("n_users", 0);
        std::string session_mode = file_cfg.value("session_mode", std::string{"random"});
        bool file_has_mode = file_cfg.contains("session_mode");
        std::string preset = file_cfg.value("preset", std::string{});
        std::string model_path;

        auto add_common = [&](CLI::App* cmd, bool needs_input) {
            if (needs_input)
                cmd->add_option("input", common.input, "input CSV")->required();
            cmd->add_option("--out", common.out, "output path");
            cmd->add_option("--config", config_dummy, "JSON config file; flags override it");
            cmd->add_option("--seed", common.seed, "random seed");
            cmd->add_option("--jobs", common.jobs, "parallel workers");
            cmd->add_option("--format", common.format, "cmu, mobikey, or generic")
                ->check(CLI::IsMember({"cmu", "mobikey", "generic"}));
        };

        CLI::App* ingest = app.add_subcommand("ingest", "load, validate, and normalize a dataset");
        add_common(ingest, true);

        CLI::App* train_cmd = app.add_subcommand("train", "fit the identification model");
        add_common(train_cmd, true);
        add_pipeline_flags(train_cmd, base_cfg, reducer, cluster, classifier, no_quantile);
        train_cmd->add_option("--sample-size", sample_size, "samples kept per user");
        train_cmd->add_option("--n-users", n_users, "users kept from the dataset");

        CLI::App* identify_cmd = app.add_subcommand("identify", "label samples with a trained model");
        identify_cmd->add_option("model", model_path, "trained model JSON")->required();
        add_common(identify_cmd, true);

        CLI::App* exp = app.add_subcommand("experiment", "run an evaluation grid");
        add_common(exp, true);
        add_pipeline_flags(exp, base_cfg, reducer, cluster, classifier, no_quantile);
        exp->add_option("--sample-size", sample_size, "single per-user sample count");
        exp->add_option("--n-users", n_users, "single user count");
        auto* mode_opt = exp->add_option("--session-mode", session_mode, "intra, inter, or random")
                             ->check(CLI::IsMember({"intra", "inter", "random"}));
        exp->add_option("--preset", preset, "table1, table3, table4, or table5")
            ->check(CLI::IsMember({"table1", "table3", "table4", "table5"}));

        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            return app.exit(e);
        }

        base_cfg.reducer = reducer_from_name(reducer);
        base_cfg.cluster = cluster_method_from_name(cluster);
        base_cfg.classifier = classifier_from_name(classifier);
        base_cfg.quantile = !no_quantile;

        if (ingest->parsed()) return cmd_ingest(common);
        if (train_cmd->parsed()) return cmd_train(common, base_cfg, sample_size, n_users);
        if (identify_cmd->parsed()) return cmd_identify(model_path, common);
        if (exp->parsed())
            return cmd_experiment(common, file_cfg, preset, base_cfg, sample_size, n_users,
                                  session_mode, file_has_mode || mode_opt->count() > 0);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace kbid
