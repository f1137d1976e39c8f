#ifndef KBID_DATASET_HPP
#define KBID_DATASET_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kbid/common.hpp"

namespace kbid {

struct KeystrokeSample {
    std::string user_id;
    int session = 1;       // >= 1
    int rep = 1;           // >= 1
    std::vector<double> features;  // non-negative, finite
};

enum class DatasetSource { CMU, MOBIKEY, GENERIC };

struct Dataset {
    std::vector<KeystrokeSample> samples;
    std::vector<std::string> feature_names;
    DatasetSource source = DatasetSource::GENERIC;

    std::size_t feature_count() const { return feature_names.size(); }

    // distinct user ids in first-appearance order
    std::vector<std::string> users() const;

    // samples of one user, preserving order
    std::vector<std::size_t> user_rows(const std::string& user_id) const;

    // n_samples x n_features numeric view
    FeatureMatrix features() const;
};

struct SplitSpec {
    enum class Mode { INTRA_SESSION, INTER_SESSION, RANDOM };
    double train_fraction = 0.8;  // in (0,1)
    Mode mode = Mode::RANDOM;
    std::uint64_t seed = 0;
};

struct ColumnMap {
    std::string user_col;
    std::string session_col;
    std::string rep_col;                   // optional; empty -> per-(user,session) counter
    std::vector<std::string> timing_cols;  // at least one
};

// CMU benchmark dialect: subject,sessionIndex,rep,<timing columns...>
Dataset load_cmu(const std::string& path);

// Arbitrary header; roles supplied by the caller. Only mapped timing columns
// become features.
Dataset load_mobikey(const std::string& path, const ColumnMap& map);

// Uniform choice of n_users distinct users without replacement. The seeded
// permutation has the prefix property: the same seed with a larger n_users
// returns a superset.
Dataset select_users(const Dataset& ds, std::size_t n_users, std::uint64_t seed);

// Per-user, per-feature Tukey fences [Q1 - k*IQR, Q3 + k*IQR]. A user whose
// samples would all be dropped is kept unfiltered and reported in `flagged`.
Dataset remove_outliers(const Dataset& ds, double k,
                        std::vector<std::string>* flagged = nullptr);

// Per-user partition: ceil(train_fraction * n) samples to train, rest to test.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

// At most n samples per user, chosen uniformly without replacement.
Dataset subsample_per_user(const Dataset& ds, std::size_t n, std::uint64_t seed);

// Normalized cache in the dataset's own dialect; loaders round-trip on it.
void save_csv(const Dataset& ds, const std::string& path);

}  // namespace kbid

#endif  // KBID_DATASET_HPP
