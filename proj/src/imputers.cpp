#include "quip/imputers.hpp"

#include <algorithm>
#include <cmath>

namespace quip {

double MeanImputer::column_mean(const Table& t, int col) {
    if (t.schema.cols[col].type == AttrType::Text)
        throw Error("impute", "mean undefined for text column " + t.schema.cols[col].name);
    double lo = 0, hi = 0;
    bool any = false;
    for (const auto& row : t.rows) {
        if (row.miss[col] || row.vals[col].is_null()) continue;
        double d = row.vals[col].numeric();
        if (!any) {
            lo = hi = d;
            any = true;
        } else {
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
    if (!any)
        throw Error("impute", "column " + t.schema.name + "." + t.schema.cols[col].name +
                                  " has no available values");
    constexpr int kBuckets = 64;
    struct Bucket {
        long n = 0;
        double sum = 0;
    };
    Bucket hist[kBuckets];
    double width = (hi - lo) / kBuckets;
    for (const auto& row : t.rows) {
        if (row.miss[col] || row.vals[col].is_null()) continue;
        double d = row.vals[col].numeric();
        int b = width > 0 ? std::min(kBuckets - 1, static_cast<int>((d - lo) / width)) : 0;
        hist[b].n += 1;
        hist[b].sum += d;
    }
    long n = 0;
    double sum = 0;
    for (const auto& b : hist) {
        n += b.n;
        sum += b.sum;
    }
    return sum / static_cast<double>(n);
}

Value MeanImputer::impute(const Database& db, int table_idx, int row, int col) {
    (void)row;
    return Value::of(column_mean(db.tables[table_idx], col));
}

const KnnImputer::Model& KnnImputer::model_for(const Database& db, int table_idx) {
    auto it = models_.find(table_idx);
    if (it != models_.end()) return it->second;
    const Table& t = db.tables[table_idx];
    Model m;
    for (size_t c = 0; c < t.schema.cols.size(); ++c)
        if (t.schema.cols[c].type != AttrType::Text)
            m.numeric_cols.push_back(static_cast<int>(c));
    for (size_t r = 0; r < t.rows.size(); ++r) {
        bool complete = true;
        for (size_t c = 0; c < t.schema.cols.size(); ++c)
            if (t.rows[r].miss[c] || t.rows[r].vals[c].is_null()) complete = false;
        if (complete) m.complete_rows.push_back(static_cast<int>(r));
    }
    m.min.assign(m.numeric_cols.size(), 0);
    m.max.assign(m.numeric_cols.size(), 0);
    for (size_t i = 0; i < m.numeric_cols.size(); ++i) {
        bool first = true;
        for (int r : m.complete_rows) {
            double d = t.rows[r].vals[m.numeric_cols[i]].numeric();
            if (first) {
                m.min[i] = m.max[i] = d;
                first = false;
            } else {
                m.min[i] = std::min(m.min[i], d);
                m.max[i] = std::max(m.max[i], d);
            }
        }
    }
    return models_.emplace(table_idx, std::move(m)).first->second;
}

Value KnnImputer::impute(const Database& db, int table_idx, int row, int col) {
    const Table& t = db.tables[table_idx];
    const Model& m = model_for(db, table_idx);
    if (m.complete_rows.empty())
        throw Error("impute", "knn: table " + t.schema.name + " has no complete rows");

    const BaseTuple& target = t.rows[row];
    // usable features: numeric, present in the target, not the imputed column
    std::vector<size_t> feat;
    for (size_t i = 0; i < m.numeric_cols.size(); ++i) {
        int c = m.numeric_cols[i];
        if (c == col) continue;
        if (target.miss[c] || target.vals[c].is_null()) continue;
        feat.push_back(i);
    }
    std::vector<std::pair<double, int>> dist;  // (distance, row)
    dist.reserve(m.complete_rows.size());
    for (int r : m.complete_rows) {
        double d2 = 0;
        for (size_t i : feat) {
            int c = m.numeric_cols[i];
            double span = m.max[i] - m.min[i];
            double a = span > 0 ? (target.vals[c].numeric() - m.min[i]) / span : 0;
            double b = span > 0 ? (t.rows[r].vals[c].numeric() - m.min[i]) / span : 0;
            d2 += (a - b) * (a - b);
        }
        dist.emplace_back(std::sqrt(d2), r);
    }
    std::sort(dist.begin(), dist.end());  // distance, then row ordinal
    size_t k = std::min<size_t>(static_cast<size_t>(k_), dist.size());

    if (t.schema.cols[col].type == AttrType::Text) {
        std::map<std::string, int> votes;
        for (size_t i = 0; i < k; ++i)
            votes[t.rows[dist[i].second].vals[col].as_text()] += 1;
        std::string best;
        int best_n = -1;
        for (const auto& [v, n] : votes) {
            if (n > best_n) {
                best = v;
                best_n = n;
            }
        }
        return Value::of(best);
    }
    double sum = 0;
    for (size_t i = 0; i < k; ++i) sum += t.rows[dist[i].second].vals[col].numeric();
    double mean = sum / static_cast<double>(k);
    if (t.schema.cols[col].type == AttrType::Int)
        return Value::of(static_cast<int64_t>(std::llround(mean)));
    return Value::of(mean);
}

Value OracleImputer::impute(const Database& db, int table_idx, int row, int col) {
    const Table& t = db.tables[table_idx];
    return db.gt.lookup(t.schema.name, row, t.schema.cols[col].name);
}

std::unique_ptr<Imputer> make_imputer(const std::string& name, double latency_ms) {
    std::string n = lower(name);
    if (n == "mean") return std::make_unique<MeanImputer>();
    if (n == "knn") return std::make_unique<KnnImputer>();
    if (n == "oracle") return std::make_unique<OracleImputer>(latency_ms);
    throw Error("parse", "unknown imputer '" + name + "'");
}

}  // namespace quip
