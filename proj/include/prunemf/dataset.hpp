#pragma once

// Rating triples, index compaction, seeded splits, and the synthetic
// low-rank generator used for offline experiments.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <cstring>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "prunemf/error.hpp"

namespace prunemf {

struct RatingTriple {
    std::uint32_t user = 0;  // dense 0-based index
    std::uint32_t item = 0;  // dense 0-based index
    double rating = 0.0;

    friend bool operator==(const RatingTriple&, const RatingTriple&) = default;
};

struct RatingScale {
    double min = 1.0;
    double max = 5.0;

    double clamp(double value) const { return std::clamp(value, min, max); }
};

/// External id tables. Index `u` maps back to `users[u]`.
struct IdMaps {
    std::vector<std::string> users;
    std::vector<std::string> items;
    std::unordered_map<std::string, std::uint32_t> user_index;
    std::unordered_map<std::string, std::uint32_t> item_index;
};

/// Observed ratings with fixed matrix dimensions. Train/test halves of a
/// split share the parent's dimensions and id tables.
class RatingDataset {
public:
    RatingDataset() : ids_(std::make_shared<IdMaps>()) {}
    RatingDataset(std::vector<RatingTriple> triples, std::size_t num_users, std::size_t num_items,
                  RatingScale scale, std::shared_ptr<const IdMaps> ids)
        : triples_(std::move(triples)), num_users_(num_users), num_items_(num_items), scale_(scale),
          ids_(std::move(ids)) {}

    const std::vector<RatingTriple>& triples() const { return triples_; }
    std::size_t size() const { return triples_.size(); }
    bool empty() const { return triples_.empty(); }
    std::size_t num_users() const { return num_users_; }
    std::size_t num_items() const { return num_items_; }
    const RatingScale& scale() const { return scale_; }
    const IdMaps& ids() const { return *ids_; }
    std::shared_ptr<const IdMaps> shared_ids() const { return ids_; }

    const std::string& external_user(std::uint32_t u) const { return ids_->users.at(u); }
    const std::string& external_item(std::uint32_t i) const { return ids_->items.at(i); }

private:
    std::vector<RatingTriple> triples_;
    std::size_t num_users_ = 0;
    std::size_t num_items_ = 0;
    RatingScale scale_;
    std::shared_ptr<const IdMaps> ids_;
};

enum class FileFormat { tsv, csv };

enum class Field { user, item, rating, ignore };

struct LoadOptions {
    FileFormat format = FileFormat::tsv;
    std::vector<Field> field_order{Field::user, Field::item, Field::rating, Field::ignore};
    /// When unset, the scale is the observed [min, max] of the ratings.
    std::optional<RatingScale> scale;
};

struct LoadSummary {
    std::size_t lines_read = 0;
    std::size_t comments_skipped = 0;
    bool header_skipped = false;
    std::size_t duplicates_replaced = 0;
    std::size_t out_of_scale = 0;
};

struct DatasetStats {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t count = 0;
    double density = 0.0;
    RatingScale scale;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line, FileFormat format) {
    std::vector<std::string_view> out;
    if (format == FileFormat::csv) {
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return out;
    }
    // tsv: any run of tabs or spaces separates fields
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == '\t' || line[i] == ' ' || line[i] == '\r')) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && line[j] != '\t' && line[j] != ' ' && line[j] != '\r') ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

inline bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    std::string buf(s);
    char* end = nullptr;
    out = std::strtod(buf.c_str(), &end);
    return end == buf.c_str() + buf.size();
}

/// Assigns dense indices in first-seen order and resolves duplicate cells
/// by keeping the last rating.
class Compactor {
public:
    void add(const std::string& user, const std::string& item, double rating) {
        const auto u = intern(user, ids_->users, ids_->user_index);
        const auto i = intern(item, ids_->items, ids_->item_index);
        const auto key = (static_cast<std::uint64_t>(u) << 32) | i;
        const auto [it, inserted] = cell_.try_emplace(key, triples_.size());
        if (inserted) {
            triples_.push_back({u, i, rating});
        } else {
            triples_[it->second].rating = rating;
            ++duplicates_;
        }
    }

    std::size_t duplicates() const { return duplicates_; }

    RatingDataset finish(std::optional<RatingScale> scale, std::size_t& out_of_scale) && {
        RatingScale s;
        if (scale) {
            s = *scale;
        } else if (!triples_.empty()) {
            const auto [lo, hi] = std::minmax_element(
                triples_.begin(), triples_.end(),
                [](const RatingTriple& a, const RatingTriple& b) { return a.rating < b.rating; });
            s = {lo->rating, hi->rating};
        }
        out_of_scale = static_cast<std::size_t>(std::count_if(
            triples_.begin(), triples_.end(),
            [&](const RatingTriple& t) { return t.rating < s.min || t.rating > s.max; }));
        const auto m = ids_->users.size();
        const auto n = ids_->items.size();
        return RatingDataset(std::move(triples_), m, n, s, std::move(ids_));
    }

private:
    static std::uint32_t intern(const std::string& key, std::vector<std::string>& names,
                                std::unordered_map<std::string, std::uint32_t>& index) {
        const auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(names.size()));
        if (inserted) names.push_back(key);
        return it->second;
    }

    std::shared_ptr<IdMaps> ids_ = std::make_shared<IdMaps>();
    std::vector<RatingTriple> triples_;
    std::unordered_map<std::uint64_t, std::size_t> cell_;
    std::size_t duplicates_ = 0;
};

}  // namespace detail

inline RatingDataset parse_ratings(std::istream& in, const LoadOptions& opts, LoadSummary* summary = nullptr,
                                   const std::string& source = "<stream>") {
    std::size_t user_col = SIZE_MAX, item_col = SIZE_MAX, rating_col = SIZE_MAX;
    for (std::size_t c = 0; c < opts.field_order.size(); ++c) {
        switch (opts.field_order[c]) {
            case Field::user: user_col = c; break;
            case Field::item: item_col = c; break;
            case Field::rating: rating_col = c; break;
            case Field::ignore: break;
        }
    }
    if (user_col == SIZE_MAX || item_col == SIZE_MAX || rating_col == SIZE_MAX)
        throw ConfigError("field_order must name user, item and rating columns");
    const auto needed = std::max({user_col, item_col, rating_col, std::size_t{2}}) + 1;

    LoadSummary local;
    detail::Compactor compactor;
    std::string line;
    std::size_t line_no = 0;
    bool seen_data = false;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = detail::trim(line);
        if (view.empty()) continue;
        if (view.front() == '#') {
            ++local.comments_skipped;
            continue;
        }
        const auto fields = detail::split_fields(view, opts.format);
        double rating = 0.0;
        const bool numeric = fields.size() > rating_col && detail::parse_double(fields[rating_col], rating);
        if (!seen_data && !numeric) {
            // first non-comment line with a non-numeric rating is a header
            seen_data = true;
            local.header_skipped = true;
            continue;
        }
        seen_data = true;
        if (fields.size() < needed || !numeric || fields[user_col].empty() || fields[item_col].empty())
            throw DataError(source + ":" + std::to_string(line_no) + ": malformed line '" + std::string(view) + "'");
        if (!std::isfinite(rating))
            throw DataError(source + ":" + std::to_string(line_no) + ": non-finite rating");
        ++local.lines_read;
        compactor.add(std::string(fields[user_col]), std::string(fields[item_col]), rating);
    }
    local.duplicates_replaced = compactor.duplicates();
    auto ds = std::move(compactor).finish(opts.scale, local.out_of_scale);
    if (ds.empty()) throw DataError(source + ": empty dataset");
    if (summary) *summary = local;
    return ds;
}

/// Loads a rating file. Lines starting with '#' are skipped, as is a
/// leading header row. Out-of-scale ratings are kept and counted.
inline RatingDataset load_ratings(const std::string& path, const LoadOptions& opts = {},
                                  LoadSummary* summary = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open rating file: " + path);
    LoadSummary local;
    auto ds = parse_ratings(in, opts, &local, path);
    if (local.out_of_scale > 0)
        std::cerr << "warning: " << path << ": " << local.out_of_scale << " ratings outside scale ["
                  << ds.scale().min << ", " << ds.scale().max << "]\n";
    if (summary) *summary = local;
    return ds;
}

/// Seeded uniform shuffle followed by a prefix/suffix cut at
/// round(train_fraction * count).
inline std::pair<RatingDataset, RatingDataset> split(const RatingDataset& ds, double train_fraction,
                                                     std::uint64_t seed) {
    if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
        throw ConfigError("split.fraction must lie in [0, 1]");
    std::vector<RatingTriple> shuffled = ds.triples();
    std::mt19937_64 rng(seed);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(shuffled.size())));
    std::vector<RatingTriple> train(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<RatingTriple> test(shuffled.begin() + static_cast<std::ptrdiff_t>(cut), shuffled.end());
    return {RatingDataset(std::move(train), ds.num_users(), ds.num_items(), ds.scale(), ds.shared_ids()),
            RatingDataset(std::move(test), ds.num_users(), ds.num_items(), ds.scale(), ds.shared_ids())};
}

inline DatasetStats stats(const RatingDataset& ds) {
    DatasetStats s{ds.num_users(), ds.num_items(), ds.size(), 0.0, ds.scale()};
    const double cells = static_cast<double>(s.num_users) * static_cast<double>(s.num_items);
    if (cells > 0) s.density = static_cast<double>(s.count) / cells;
    return s;
}

/// FNV-1a over dimensions and triples. Stable across runs and platforms
/// with IEEE doubles.
inline std::uint64_t fingerprint(const RatingDataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(ds.num_users());
    mix(ds.num_items());
    for (const auto& t : ds.triples()) {
        mix(t.user);
        mix(t.item);
        std::uint64_t bits;
        std::memcpy(&bits, &t.rating, sizeof bits);
        mix(bits);
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

struct SynthSpec {
    std::size_t num_users = 100;
    std::size_t num_items = 200;
    std::size_t rank = 5;
    std::size_t count = 5000;
    double noise = 0.5;
    std::uint64_t seed = 1;
};

/// Ratings sampled from a seeded rank-`rank` model plus Gaussian noise,
/// clipped to a 1-5 scale. Factor entries are uniform on
/// [sqrt(1/rank), sqrt(5/rank)] so noiseless ratings already lie in [1, 5].
/// External ids are 1-based integers.
inline RatingDataset generate_synthetic(const SynthSpec& spec) {
    if (spec.num_users == 0 || spec.num_items == 0 || spec.rank == 0)
        throw ConfigError("synthetic sizes must be positive");
    const auto cells = static_cast<std::uint64_t>(spec.num_users) * spec.num_items;
    if (spec.count == 0 || spec.count > cells) throw ConfigError("synthetic count must lie in [1, m*n]");
    if (!(spec.noise >= 0.0)) throw ConfigError("synthetic noise must be >= 0");

    std::mt19937_64 rng(spec.seed);
    const double r = static_cast<double>(spec.rank);
    std::uniform_real_distribution<double> factor(std::sqrt(1.0 / r), std::sqrt(5.0 / r));
    std::vector<double> users(spec.num_users * spec.rank), items(spec.num_items * spec.rank);
    for (auto& v : users) v = factor(rng);
    for (auto& v : items) v = factor(rng);

    std::vector<std::uint64_t> picked;
    picked.reserve(spec.count);
    if (spec.count * 2 > cells) {
        std::vector<std::uint64_t> all(cells);
        for (std::uint64_t c = 0; c < cells; ++c) all[c] = c;
        std::shuffle(all.begin(), all.end(), rng);
        picked.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.count));
    } else {
        std::unordered_set<std::uint64_t> seen;
        seen.reserve(spec.count * 2);
        std::uniform_int_distribution<std::uint64_t> cell(0, cells - 1);
        while (picked.size() < spec.count) {
            const auto c = cell(rng);
            if (seen.insert(c).second) picked.push_back(c);
        }
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    detail::Compactor compactor;
    for (const auto c : picked) {
        const auto u = static_cast<std::size_t>(c / spec.num_items);
        const auto i = static_cast<std::size_t>(c % spec.num_items);
        double value = 0.0;
        for (std::size_t t = 0; t < spec.rank; ++t) value += users[u * spec.rank + t] * items[i * spec.rank + t];
        if (spec.noise > 0.0) value += spec.noise * gauss(rng);
        compactor.add(std::to_string(u + 1), std::to_string(i + 1), std::clamp(value, 1.0, 5.0));
    }
    std::size_t out_of_scale = 0;
    return std::move(compactor).finish(RatingScale{1.0, 5.0}, out_of_scale);
}

/// Writes `user<TAB>item<TAB>rating` lines using external ids.
inline void write_tsv(const RatingDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write rating file: " + path);
    char buf[64];
    for (const auto& t : ds.triples()) {
        std::snprintf(buf, sizeof buf, "%.17g", t.rating);
        out << ds.external_user(t.user) << '\t' << ds.external_item(t.item) << '\t' << buf << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace prunemf
