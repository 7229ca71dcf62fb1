#pragma once

#include <memory>

#include "quip/storage.hpp"

namespace quip {

/// Imputation backend. Deterministic given the database snapshot: repeated
/// calls for the same cell return the same value. `charge_ms` is the
/// deterministic per-call cost fed to the decision statistics (wall time is
/// reported separately and never drives decisions).
class Imputer {
public:
    virtual ~Imputer() = default;
    /// Never returns NULL; throws Error("impute") on failure.
    virtual Value impute(const Database& db, int table_idx, int row, int col) = 0;
    virtual bool blocking() const = 0;
    virtual double charge_ms() const = 0;
    virtual std::string name() const = 0;
};

/// Histogram-backed column mean (64 equi-width buckets holding count+sum, so
/// the reported mean is exact). Numeric columns only; non-blocking.
class MeanImputer : public Imputer {
public:
    explicit MeanImputer(double charge_ms = 0.05) : charge_(charge_ms) {}
    Value impute(const Database& db, int table_idx, int row, int col) override;
    bool blocking() const override { return false; }
    double charge_ms() const override { return charge_; }
    std::string name() const override { return "mean"; }

    /// Exposed for tests: the histogram mean of a column.
    static double column_mean(const Table& t, int col);

private:
    double charge_;
};

/// k-nearest-neighbour over complete rows, Euclidean distance on min-max
/// normalized numeric attributes (target column excluded). Numeric targets
/// take the neighbour mean (rounded for int columns), text targets the mode
/// with a deterministic tie-break. Blocking: trains once per table against
/// the base snapshot at first use.
class KnnImputer : public Imputer {
public:
    explicit KnnImputer(int k = 3, double charge_ms = 5.0) : k_(k), charge_(charge_ms) {}
    Value impute(const Database& db, int table_idx, int row, int col) override;
    bool blocking() const override { return true; }
    double charge_ms() const override { return charge_; }
    std::string name() const override { return "knn"; }

private:
    struct Model {
        std::vector<int> complete_rows;
        std::vector<int> numeric_cols;
        std::vector<double> min, max;  // per numeric col
    };
    const Model& model_for(const Database& db, int table_idx);

    int k_;
    double charge_;
    std::map<int, Model> models_;
};

/// Ground-truth lookup standing in for an expensive external imputer; the
/// configured latency is charged to the cost ledger per call (no actual
/// sleep). Fails loudly on absent keys.
class OracleImputer : public Imputer {
public:
    explicit OracleImputer(double latency_ms = 0) : latency_(latency_ms) {}
    Value impute(const Database& db, int table_idx, int row, int col) override;
    bool blocking() const override { return false; }
    double charge_ms() const override { return latency_; }
    std::string name() const override { return "oracle"; }

private:
    double latency_;
};

std::unique_ptr<Imputer> make_imputer(const std::string& name, double latency_ms);

}  // namespace quip
