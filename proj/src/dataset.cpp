#include "kbid/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace kbid {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& s, std::size_t row, const std::string& col) {
    double v = 0.0;
    auto first = s.data();
    auto last = s.data() + s.size();
    while (first != last && *first == ' ') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw std::runtime_error("row " + std::to_string(row) + ": non-numeric value '" + s +
                                 "' in column " + col);
    if (!std::isfinite(v))
        throw std::runtime_error("row " + std::to_string(row) + ": non-finite value in column " + col);
    return v;
}

int parse_int(const std::string& s, std::size_t row, const std::string& col) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw std::runtime_error("row " + std::to_string(row) + ": non-integer value '" + s +
                                 "' in column " + col);
    return v;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void check_no_duplicate_keys(const Dataset& ds) {
    std::set<std::tuple<std::string, int, int>> seen;
    for (const auto& s : ds.samples) {
        auto key = std::make_tuple(s.user_id, s.session, s.rep);
        if (!seen.insert(key).second)
            throw std::runtime_error("duplicate (user, session, rep) triple: " + s.user_id + "," +
                                     std::to_string(s.session) + "," + std::to_string(s.rep));
    }
}

}  // namespace

std::vector<std::string> Dataset::users() const {
    std::vector<std::string> order;
    std::unordered_set<std::string> seen;
    for (const auto& s : samples)
        if (seen.insert(s.user_id).second) order.push_back(s.user_id);
    return order;
}

std::vector<std::size_t> Dataset::user_rows(const std::string& user_id) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].user_id == user_id) rows.push_back(i);
    return rows;
}

FeatureMatrix Dataset::features() const {
    FeatureMatrix fm;
    fm.values.resize(static_cast<Eigen::Index>(samples.size()),
                     static_cast<Eigen::Index>(feature_count()));
    fm.user_ids.reserve(samples.size());
    fm.sessions.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        for (std::size_t j = 0; j < feature_count(); ++j)
            fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                samples[i].features[j];
        fm.user_ids.push_back(samples[i].user_id);
        fm.sessions.push_back(samples[i].session);
    }
    return fm;
}

Dataset load_cmu(const std::string& path) {
    auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error("empty file: " + path);

    auto header = split_line(lines[0]);
    if (header.size() < 4 || header[0] != "subject" || header[1] != "sessionIndex" ||
        header[2] != "rep")
        throw std::runtime_error("not a CMU-dialect header (expected subject,sessionIndex,rep,...): " +
                                 path);

    Dataset ds;
    ds.source = DatasetSource::CMU;
    ds.feature_names.assign(header.begin() + 3, header.end());

    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto cells = split_line(lines[r]);
        if (cells.size() != header.size())
            throw std::runtime_error("row " + std::to_string(r + 1) + ": expected " +
                                     std::to_string(header.size()) + " columns, got " +
                                     std::to_string(cells.size()));
        KeystrokeSample s;
        s.user_id = cells[0];
        s.session = parse_int(cells[1], r + 1, "sessionIndex");
        s.rep = parse_int(cells[2], r + 1, "rep");
        s.features.reserve(ds.feature_names.size());
        for (std::size_t c = 3; c < cells.size(); ++c)
            s.features.push_back(parse_double(cells[c], r + 1, header[c]));
        ds.samples.push_back(std::move(s));
    }
    check_no_duplicate_keys(ds);
    return ds;
}

Dataset load_mobikey(const std::string& path, const ColumnMap& map) {
    if (map.user_col.empty() || map.session_col.empty() || map.timing_cols.empty())
        throw std::invalid_argument(
            "column map must name a user column, a session column, and at least one timing column");

    auto lines = read_lines(path);
    if (lines.empty()) throw std::runtime_error("empty file: " + path);
    auto header = split_line(lines[0]);

    auto col_index = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::invalid_argument("mapped column not present in header: " + name);
        return static_cast<std::size_t>(it - header.begin());
    };

    std::size_t user_idx = col_index(map.user_col);
    std::size_t session_idx = col_index(map.session_col);
    std::optional<std::size_t> rep_idx;
    if (!map.rep_col.empty()) rep_idx = col_index(map.rep_col);
    std::vector<std::size_t> timing_idx;
    for (const auto& n : map.timing_cols) timing_idx.push_back(col_index(n));

    Dataset ds;
    ds.source = DatasetSource::MOBIKEY;
    ds.feature_names = map.timing_cols;

    std::map<std::pair<std::string, int>, int> rep_counter;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        if (lines[r].empty()) continue;
        auto cells = split_line(lines[r]);
        if (cells.size() != header.size())
            throw std::runtime_error("row " + std::to_string(r + 1) + ": expected " +
                                     std::to_string(header.size()) + " columns, got " +
                                     std::to_string(cells.size()));
        KeystrokeSample s;
        s.user_id = cells[user_idx];
        s.session = parse_int(cells[session_idx], r + 1, map.session_col);
        if (rep_idx)
            s.rep = parse_int(cells[*rep_idx], r + 1, map.rep_col);
        else
            s.rep = ++rep_counter[{s.user_id, s.session}];
        for (std::size_t t = 0; t < timing_idx.size(); ++t)
            s.features.push_back(parse_double(cells[timing_idx[t]], r + 1, map.timing_cols[t]));
        ds.samples.push_back(std::move(s));
    }
    check_no_duplicate_keys(ds);
    return ds;
}

Dataset select_users(const Dataset& ds, std::size_t n_users, std::uint64_t seed) {
    auto all = ds.users();
    if (n_users > all.size())
        throw std::invalid_argument("select_users: requested " + std::to_string(n_users) +
                                    " users but dataset has " + std::to_string(all.size()));
    if (n_users == all.size()) return ds;

    Rng rng(seed);
    std::vector<std::string> shuffled = all;
    rng.shuffle(shuffled);
    std::unordered_set<std::string> keep(shuffled.begin(), shuffled.begin() + n_users);

    Dataset out;
    out.feature_names = ds.feature_names;
    out.source = ds.source;
    for (const auto& s : ds.samples)
        if (keep.count(s.user_id)) out.samples.push_back(s);
    return out;
}

Dataset remove_outliers(const Dataset& ds, double k, std::vector<std::string>* flagged) {
    require(!ds.samples.empty(), "remove_outliers: dataset is empty");
    require(k > 0, "remove_outliers: k must be positive");
    if (flagged) flagged->clear();

    // type-7 quantile of a sorted column
    auto quantile = [](const std::vector<double>& sorted, double p) {
        double h = p * static_cast<double>(sorted.size() - 1);
        std::size_t lo = static_cast<std::size_t>(std::floor(h));
        std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        double w = h - static_cast<double>(lo);
        return (1.0 - w) * sorted[lo] + w * sorted[hi];
    };

    std::vector<bool> keep(ds.samples.size(), true);
    for (const auto& user : ds.users()) {
        auto rows = ds.user_rows(user);
        std::size_t nf = ds.feature_count();
        std::vector<double> lo_fence(nf), hi_fence(nf);
        for (std::size_t f = 0; f < nf; ++f) {
            std::vector<double> col;
            col.reserve(rows.size());
            for (auto r : rows) col.push_back(ds.samples[r].features[f]);
            std::sort(col.begin(), col.end());
            double q1 = quantile(col, 0.25), q3 = quantile(col, 0.75);
            double iqr = q3 - q1;
            lo_fence[f] = q1 - k * iqr;
            hi_fence[f] = q3 + k * iqr;
        }
        std::size_t kept = 0;
        std::vector<bool> user_keep(rows.size(), true);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (std::size_t f = 0; f < nf; ++f) {
                double v = ds.samples[rows[i]].features[f];
                if (v < lo_fence[f] || v > hi_fence[f]) {
                    user_keep[i] = false;
                    break;
                }
            }
            if (user_keep[i]) ++kept;
        }
        if (kept == 0) {
            // never drop a user entirely
            if (flagged) flagged->push_back(user);
            continue;
        }
        for (std::size_t i = 0; i < rows.size(); ++i) keep[rows[i]] = user_keep[i];
    }

    Dataset out;
    out.feature_names = ds.feature_names;
    out.source = ds.source;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        if (keep[i]) out.samples.push_back(ds.samples[i]);
    return out;
}

namespace {

// quota allocation: total train = ceil(frac*n), spread over sessions
// proportionally by size (largest remainder, ties to lower session id)
std::map<int, std::size_t> session_train_quota(const std::map<int, std::vector<std::size_t>>& by_session,
                                               std::size_t n_train) {
    std::size_t n = 0;
    for (const auto& [sess, rows] : by_session) n += rows.size();
    std::map<int, std::size_t> quota;
    std::vector<std::pair<double, int>> remainders;  // (-fraction, session) for sorting
    std::size_t assigned = 0;
    for (const auto& [sess, rows] : by_session) {
        double exact = static_cast<double>(n_train) * static_cast<double>(rows.size()) /
                       static_cast<double>(n);
        std::size_t base = std::min(static_cast<std::size_t>(std::floor(exact)), rows.size());
        quota[sess] = base;
        assigned += base;
        remainders.push_back({-(exact - std::floor(exact)), sess});
    }
    std::sort(remainders.begin(), remainders.end());
    for (const auto& [negfrac, sess] : remainders) {
        if (assigned >= n_train) break;
        if (quota[sess] < by_session.at(sess).size()) {
            ++quota[sess];
            ++assigned;
        }
    }
    // leftover capacity if some sessions saturated
    for (auto& [sess, q] : quota) {
        if (assigned >= n_train) break;
        std::size_t cap = by_session.at(sess).size();
        std::size_t add = std::min(cap - q, n_train - assigned);
        q += add;
        assigned += add;
    }
    return quota;
}

}  // namespace

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
    require(spec.train_fraction > 0.0 && spec.train_fraction < 1.0,
            "split: train_fraction must be in (0,1)");

    Rng rng(spec.seed);
    std::vector<bool> to_train(ds.samples.size(), false);

    auto users = ds.users();
    for (const auto& user : users) {
        auto rows = ds.user_rows(user);
        require(rows.size() >= 2, "split: user " + user + " has fewer than 2 samples");
        std::size_t n = rows.size();
        std::size_t n_train =
            static_cast<std::size_t>(std::ceil(spec.train_fraction * static_cast<double>(n)));
        if (n_train >= n)
            throw std::invalid_argument("split: train_fraction " +
                                        std::to_string(spec.train_fraction) + " leaves user " +
                                        user + " with an empty test set");

        Rng user_rng = rng.fork(stable_hash(user));

        if (spec.mode == SplitSpec::Mode::RANDOM) {
            std::vector<std::size_t> shuffled = rows;
            user_rng.shuffle(shuffled);
            for (std::size_t i = 0; i < n_train; ++i) to_train[shuffled[i]] = true;
        } else {
            std::map<int, std::vector<std::size_t>> by_session;
            for (auto r : rows) by_session[ds.samples[r].session].push_back(r);

            if (spec.mode == SplitSpec::Mode::INTRA_SESSION) {
                // every session feeds both sides where its quota allows
                auto quota = session_train_quota(by_session, n_train);
                for (auto& [sess, sess_rows] : by_session) {
                    std::vector<std::size_t> shuffled = sess_rows;
                    user_rng.shuffle(shuffled);
                    for (std::size_t i = 0; i < quota[sess]; ++i) to_train[shuffled[i]] = true;
                }
            } else {  // INTER_SESSION
                if (by_session.size() < 2)
                    throw std::invalid_argument(
                        "split: INTER_SESSION requires at least 2 sessions (user " + user + ")");
                // earliest sessions to train, latest to test; boundary chosen so
                // the train count is closest to ceil(frac*n), both sides nonempty
                std::vector<int> sessions;
                for (const auto& [sess, r] : by_session) sessions.push_back(sess);
                std::size_t best_boundary = 1, cum = 0;
                double best_err = 0;
                std::size_t running = 0;
                for (std::size_t b = 1; b < sessions.size(); ++b) {
                    running += by_session[sessions[b - 1]].size();
                    double err = std::abs(static_cast<double>(running) -
                                          static_cast<double>(n_train));
                    if (b == 1 || err < best_err) {
                        best_err = err;
                        best_boundary = b;
                        cum = running;
                    }
                }
                (void)cum;
                for (std::size_t b = 0; b < best_boundary; ++b)
                    for (auto r : by_session[sessions[b]]) to_train[r] = true;
            }
        }
    }

    Dataset train, test;
    train.feature_names = test.feature_names = ds.feature_names;
    train.source = test.source = ds.source;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        (to_train[i] ? train : test).samples.push_back(ds.samples[i]);
    return {train, test};
}

Dataset subsample_per_user(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<bool> keep(ds.samples.size(), false);
    for (const auto& user : ds.users()) {
        auto rows = ds.user_rows(user);
        Rng user_rng = rng.fork(stable_hash(user));
        if (rows.size() <= n) {
            for (auto r : rows) keep[r] = true;
        } else {
            std::vector<std::size_t> shuffled = rows;
            user_rng.shuffle(shuffled);
            for (std::size_t i = 0; i < n; ++i) keep[shuffled[i]] = true;
        }
    }
    Dataset out;
    out.feature_names = ds.feature_names;
    out.source = ds.source;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        if (keep[i]) out.samples.push_back(ds.samples[i]);
    return out;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    if (ds.source == DatasetSource::CMU)
        out << "subject,sessionIndex,rep";
    else
        out << "user,session,rep";
    for (const auto& n : ds.feature_names) out << ',' << n;
    out << '\n';
    for (const auto& s : ds.samples) {
        out << s.user_id << ',' << s.session << ',' << s.rep;
        for (double v : s.features) out << ',' << format_double(v);
        out << '\n';
    }
}

}  // namespace kbid
