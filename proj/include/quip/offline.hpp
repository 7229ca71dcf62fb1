#pragma once

#include "quip/frontend.hpp"
#include "quip/imputers.hpp"

namespace quip {

struct OfflineImputation {
    Database db;  // clean copy, no missing bits left
    std::map<std::string, long> imputations;  // per "table.column"
    long total = 0;
    double charge_ms = 0;
};

/// Imputes every missing cell of every table up front.
OfflineImputation impute_all(const Database& db, Imputer& imputer);

/// Reference evaluator for the impute-everything-first baseline: materializes
/// each plan node bottom-up with plain filters and hash joins. Independent of
/// the pipelined engine.
std::vector<std::vector<Value>> offline_execute(const PlanNode& plan, const Database& db);

}  // namespace quip
