#pragma once

#include <cstdint>

#include "kbid/dataset.hpp"

namespace kbid {

// Latent-factor generator for keystroke timing benchmarks. Each user gets a
// position in a low-dimensional trait space; feature values are per-feature
// baselines scaled by exponentiated trait projections, per-session cadence
// drift, a heavy-tailed per-rep tempo shared by every timing in the row, and
// bounded per-feature noise. Whole-row effects (tempo swings, the occasional
// spiked timing) are what push values past interquartile fences; the routine
// per-feature wiggle stays inside them, the way clean repetitions do.
struct SynthConfig {
    int n_users = 51;
    int sessions = 8;
    int reps_per_session = 50;
    int signal_dims = 3;
    double user_scale = 0.55;     // separation between users in log space
    double session_drift = 0.04;  // per-session latent cadence drift, in trait units
    double tempo_scale = 0.02;    // per-rep speed shared across features, t-tailed
    double noise_scale = 0.12;    // half-width of the bounded per-feature noise
    int noise_df = 15;            // Student-t degrees of freedom for the tempo
    double outlier_rate = 0.01;   // per-row chance of one spiked feature
    double outlier_scale_lo = 2.5;
    double outlier_scale_hi = 6.0;
    // occasionally a whole session is typed off the user's usual cadence, the
    // way a tired or distracted day reads: every rep of that session shifts
    // together by a bounded latent excursion
    double off_session_rate = 0.0;
    double off_session_lo = 0.35;
    double off_session_hi = 0.60;

    std::uint64_t seed = 1;
};

// Fixed-text layout: 31 hold/down-down/up-down timings, subjects s002 onward.
Dataset synth_cmu(const SynthConfig& config);

// Free-text layout with a configurable feature count, subjects m001 onward.
Dataset synth_mobikey(const SynthConfig& config, int n_features = 40);

}  // namespace kbid
