#include <iostream>

#include <CLI11.hpp>

#include "kbid/dataset.hpp"
#include "kbid/synth.hpp"

int main(int argc, char** argv) {
    CLI::App app{"synthetic keystroke-timing dataset generator"};

    kbid::SynthConfig cfg;
    std::string out;
    std::string format = "cmu";
    int mobikey_features = 40;

    app.add_option("--out", out, "output CSV path")->required();
    app.add_option("--format", format, "cmu or mobikey")
        ->check(CLI::IsMember({"cmu", "mobikey"}));
    app.add_option("--users", cfg.n_users, "number of users");
    app.add_option("--sessions", cfg.sessions, "sessions per user");
    app.add_option("--reps", cfg.reps_per_session, "repetitions per session");
    app.add_option("--seed", cfg.seed, "random seed");
    app.add_option("--user-scale", cfg.user_scale, "between-user separation");
    app.add_option("--session-drift", cfg.session_drift, "per-session speed drift");
    app.add_option("--noise-scale", cfg.noise_scale, "rep noise scale");
    app.add_option("--noise-df", cfg.noise_df, "Student-t degrees of freedom");
    app.add_option("--outlier-rate", cfg.outlier_rate, "outlier spike probability");
    app.add_option("--features", mobikey_features, "feature count (mobikey only)");

    CLI11_PARSE(app, argc, argv);

    try {
        kbid::Dataset ds = format == "cmu" ? kbid::synth_cmu(cfg)
                                           : kbid::synth_mobikey(cfg, mobikey_features);
        kbid::save_csv(ds, out);
        std::cout << "wrote " << ds.samples.size() << " samples for " << ds.users().size()
                  << " users to " << out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
