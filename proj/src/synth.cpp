#include "kbid/synth.hpp"

#include <cmath>
#include <cstdio>

namespace kbid {

namespace {

std::vector<std::string> cmu_feature_names() {
    const char* keys[] = {"period", "t", "i", "e", "five", "Shift.r", "o", "a", "n", "l"};
    std::vector<std::string> names;
    names.emplace_back("H.period");
    for (int i = 1; i < 10; ++i) {
        std::string prev = keys[i - 1];
        std::string cur = keys[i];
        names.push_back("DD." + prev + "." + cur);
        names.push_back("UD." + prev + "." + cur);
        names.push_back("H." + cur);
    }
    names.push_back("DD.l.Return");
    names.push_back("UD.l.Return");
    names.emplace_back("H.Return");
    return names;
}

double student_t(Rng& rng, int df) {
    double z = rng.normal();
    double chi2 = 0.0;
    for (int i = 0; i < df; ++i) {
        double g = rng.normal();
        chi2 += g * g;
    }
    return z / std::sqrt(chi2 / static_cast<double>(df));
}

// Each repetition gets one bounded sloppiness magnitude; which individual
// timings run long versus short flips independently per feature. Sharing the
// magnitude row-wise makes rough rows stick out of quartile fences on many
// features at once while clean rows stay inside, mirroring how real typists
// spoil a whole repetition rather than one timing in isolation.

std::string padded_id(char prefix, int number) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%03d", prefix, number);
    return buf;
}

Dataset generate(const SynthConfig& cfg, std::vector<std::string> feature_names,
                 DatasetSource source, char id_prefix, int id_start) {
    require(cfg.n_users >= 1, "synth: n_users must be >= 1");
    require(cfg.sessions >= 1, "synth: sessions must be >= 1");
    require(cfg.reps_per_session >= 1, "synth: reps_per_session must be >= 1");
    require(cfg.signal_dims >= 1, "synth: signal_dims must be >= 1");
    require(cfg.noise_df >= 1, "synth: noise_df must be >= 1");

    const int nf = static_cast<int>(feature_names.size());
    Rng base_rng = Rng(cfg.seed).fork(1);
    Rng loading_rng = Rng(cfg.seed).fork(2);
    Rng shape_rng = Rng(cfg.seed).fork(3);

    // Per-feature baselines by timing kind: holds are short, latencies longer.
    // The identity signal lives in the short, steady hold times while the long
    // latencies are mostly noise, so absolute distances are dominated by
    // uninformative features until ranks equalize the scales.
    std::vector<double> base(static_cast<std::size_t>(nf));
    std::vector<double> signal_mult(static_cast<std::size_t>(nf));
    std::vector<double> noise_mult(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) {
        const std::string& name = feature_names[static_cast<std::size_t>(f)];
        if (name.rfind("H.", 0) == 0) {
            base[static_cast<std::size_t>(f)] = base_rng.uniform(0.07, 0.12);
            signal_mult[static_cast<std::size_t>(f)] = shape_rng.uniform(1.1, 1.5);
            noise_mult[static_cast<std::size_t>(f)] = shape_rng.uniform(0.6, 0.9);
        } else if (name.rfind("DD.", 0) == 0) {
            base[static_cast<std::size_t>(f)] = base_rng.uniform(0.35, 0.60);
            signal_mult[static_cast<std::size_t>(f)] = shape_rng.uniform(0.2, 0.4);
            noise_mult[static_cast<std::size_t>(f)] = shape_rng.uniform(1.5, 2.1);
        } else {
            base[static_cast<std::size_t>(f)] = base_rng.uniform(0.20, 0.40);
            signal_mult[static_cast<std::size_t>(f)] = shape_rng.uniform(0.6, 1.0);
            noise_mult[static_cast<std::size_t>(f)] = shape_rng.uniform(0.8, 1.2);
        }
    }

    std::vector<Eigen::VectorXd> loadings(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) {
        Eigen::VectorXd w(cfg.signal_dims);
        for (int d = 0; d < cfg.signal_dims; ++d) w(d) = loading_rng.normal();
        loadings[static_cast<std::size_t>(f)] = w / w.norm();
    }

    Dataset ds;
    ds.source = source;
    ds.feature_names = std::move(feature_names);
    ds.samples.reserve(static_cast<std::size_t>(cfg.n_users) * cfg.sessions *
                       cfg.reps_per_session);

    for (int u = 0; u < cfg.n_users; ++u) {
        Rng user_rng = Rng(cfg.seed).fork(100 + static_cast<std::uint64_t>(u));
        Eigen::VectorXd trait(cfg.signal_dims);
        for (int d = 0; d < cfg.signal_dims; ++d) trait(d) = user_rng.normal();

        std::string uid = padded_id(id_prefix, id_start + u);
        for (int s = 1; s <= cfg.sessions; ++s) {
            // a session sits at its own cadence: the whole day's rows shift
            // together along identity directions, the way typing rhythm
            // genuinely differs between days
            Eigen::VectorXd session_trait = trait;
            for (int d = 0; d < cfg.signal_dims; ++d)
                session_trait(d) += cfg.session_drift * user_rng.normal();
            // some days the rhythm is simply off: the whole session lands a
            // bounded excursion away from the usual cadence
            if (cfg.off_session_rate > 0.0 && user_rng.uniform() < cfg.off_session_rate) {
                double mag = user_rng.uniform(cfg.off_session_lo, cfg.off_session_hi);
                Eigen::VectorXd dir(cfg.signal_dims);
                for (int d = 0; d < cfg.signal_dims; ++d) dir(d) = user_rng.normal();
                session_trait += mag * dir / dir.norm();
            }
            for (int rep = 1; rep <= cfg.reps_per_session; ++rep) {
                KeystrokeSample sample;
                sample.user_id = uid;
                sample.session = s;
                sample.rep = rep;
                sample.features.resize(static_cast<std::size_t>(nf));

                double tempo = cfg.tempo_scale * student_t(user_rng, cfg.noise_df);
                double sloppiness = user_rng.uniform();

                // at most one spiked feature per row
                int spike_feature = -1;
                double spike = 0.0;
                if (user_rng.uniform() < cfg.outlier_rate) {
                    spike_feature = static_cast<int>(user_rng.below(static_cast<std::size_t>(nf)));
                    spike = std::log(
                        user_rng.uniform(cfg.outlier_scale_lo, cfg.outlier_scale_hi));
                }

                for (int f = 0; f < nf; ++f) {
                    double signal = cfg.user_scale * signal_mult[static_cast<std::size_t>(f)] *
                                    loadings[static_cast<std::size_t>(f)].dot(session_trait);
                    double sign = user_rng.uniform() < 0.5 ? -1.0 : 1.0;
                    double noise = cfg.noise_scale * noise_mult[static_cast<std::size_t>(f)] *
                                   sloppiness * sign;
                    double lift = f == spike_feature ? spike : 0.0;
                    sample.features[static_cast<std::size_t>(f)] =
                        base[static_cast<std::size_t>(f)] *
                        std::exp(signal + tempo + noise + lift);
                }
                ds.samples.push_back(std::move(sample));
            }
        }
    }
    return ds;
}

}  // namespace

Dataset synth_cmu(const SynthConfig& config) {
    return generate(config, cmu_feature_names(), DatasetSource::CMU, 's', 2);
}

Dataset synth_mobikey(const SynthConfig& config, int n_features) {
    require(n_features >= 1, "synth_mobikey: n_features must be >= 1");
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n_features));
    for (int f = 0; f < n_features; ++f) {
        if (f % 3 == 0) names.push_back("H.k" + std::to_string(f / 3 + 1));
        else if (f % 3 == 1) names.push_back("DD.k" + std::to_string(f / 3 + 1));
        else names.push_back("UD.k" + std::to_string(f / 3 + 1));
    }
    return generate(config, std::move(names), DatasetSource::MOBIKEY, 'm', 1);
}

}  // namespace kbid
