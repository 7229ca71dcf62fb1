#include "quip/decision.hpp"

#include <json.hpp>

namespace quip {

Strategy strategy_from_name(const std::string& s) {
    std::string n = lower(s);
    if (n == "eager") return Strategy::Eager;
    if (n == "lazy") return Strategy::Lazy;
    if (n == "adaptive") return Strategy::Adaptive;
    if (n == "offline") return Strategy::Offline;
    throw Error("parse", "unknown strategy '" + s + "'");
}

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::Eager: return "eager";
        case Strategy::Lazy: return "lazy";
        case Strategy::Adaptive: return "adaptive";
        case Strategy::Offline: return "offline";
    }
    return "?";
}

void Stats::on_imputed(const std::string& attr, double cost_ms) {
    auto& a = impute_[attr];
    a.sum += cost_ms;
    a.n += 1;
}

void Stats::on_op_evaluated(int op_id, bool passed) {
    auto& o = joins_[op_id];
    o.processed += 1;
    if (passed) o.passed += 1;
}

void Stats::on_join_tested(int op_id, long n_tests) {
    auto& o = joins_[op_id];
    o.is_join = true;
    o.tests_sum += static_cast<double>(n_tests);
    o.tests_n += 1;
}

double Stats::impute_cost(const std::string& attr) const {
    auto it = impute_.find(attr);
    if (it == impute_.end() || it->second.n == 0) return 0;
    return it->second.sum / static_cast<double>(it->second.n);
}

long Stats::impute_samples(const std::string& attr) const {
    auto it = impute_.find(attr);
    return it == impute_.end() ? 0 : it->second.n;
}

double Stats::selectivity(int op_id, const DecisionConfig& cfg) const {
    auto it = joins_.find(op_id);
    if (it == joins_.end() || it->second.processed < cfg.op_bootstrap)
        return cfg.default_sel;
    return static_cast<double>(it->second.passed) /
           static_cast<double>(it->second.processed);
}

double Stats::tests_per_tuple(int op_id) const {
    auto it = joins_.find(op_id);
    if (it == joins_.end() || !it->second.is_join || it->second.tests_n == 0) return 1.0;
    return it->second.tests_sum / static_cast<double>(it->second.tests_n);
}

double Stats::ttjoin(int op_id, const DecisionConfig& cfg) const {
    auto it = joins_.find(op_id);
    if (it == joins_.end() || !it->second.is_join) return 0;
    return cfg.join_test_cost_ms;
}

std::string Stats::snapshot_json() const {
    nlohmann::json j;
    j["impute_cost_ms"] = nlohmann::json::object();
    j["impute_samples"] = nlohmann::json::object();
    for (const auto& [attr, a] : impute_) {
        j["impute_cost_ms"][attr] = a.n ? a.sum / static_cast<double>(a.n) : 0.0;
        j["impute_samples"][attr] = a.n;
    }
    j["operators"] = nlohmann::json::object();
    for (const auto& [id, o] : joins_) {
        nlohmann::json e;
        e["processed"] = o.processed;
        e["passed"] = o.passed;
        e["selectivity"] =
            o.processed ? static_cast<double>(o.passed) / static_cast<double>(o.processed)
                        : 0.0;
        if (o.is_join && o.tests_n)
            e["tests_per_tuple"] = o.tests_sum / static_cast<double>(o.tests_n);
        j["operators"][std::to_string(id)] = e;
    }
    return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

// indexes of operators that actually evaluate on this branch
std::vector<size_t> evaluated_ops(const DecisionTree& t, bool impute_branch) {
    std::vector<size_t> idx;
    for (size_t i = impute_branch ? 0 : 1; i < t.ops.size(); ++i) idx.push_back(i);
    return idx;
}

}  // namespace

double expected_imputation_cost(const DecisionTree& t, bool impute_branch) {
    auto ev = evaluated_ops(t, impute_branch);
    double total = 0;
    double reach = 1.0;
    for (size_t k = 0; k < ev.size(); ++k) {
        const DecisionOp& o = t.ops[ev[k]];
        if (o.missing) total += o.impute_cost * reach;
        reach *= o.sel;
    }
    if (!impute_branch) total += t.ops[0].impute_cost * reach;  // forced at rho
    return total;
}

double qp_of_op(const DecisionTree& t, bool impute_branch, size_t i) {
    double tests = 1.0;
    for (size_t j = 0; j <= i; ++j) {
        bool skipped = !impute_branch && j == 0;  // preserved without evaluation
        tests *= skipped ? 1.0 : t.ops[j].tests;
    }
    return tests * t.ops[i].ttjoin;
}

double expected_qp_cost(const DecisionTree& t, bool impute_branch) {
    auto ev = evaluated_ops(t, impute_branch);
    double total = 0;
    double reach = 1.0;
    for (size_t k = 0; k < ev.size(); ++k) {
        total += qp_of_op(t, impute_branch, ev[k]) * reach;
        reach *= t.ops[ev[k]].sel;
    }
    return total;
}

double DecisionPath::prob(const DecisionTree& t) const {
    auto ev = evaluated_ops(t, impute_branch);
    double p = 1.0;
    for (size_t k = 0; k < ev.size(); ++k) {
        if (fail_at >= 0 && static_cast<size_t>(fail_at) == k)
            return p * (1.0 - t.ops[ev[k]].sel);
        p *= t.ops[ev[k]].sel;
    }
    return p;
}

double DecisionPath::imputation_cost(const DecisionTree& t) const {
    auto ev = evaluated_ops(t, impute_branch);
    size_t last = fail_at >= 0 ? static_cast<size_t>(fail_at) : ev.size() - 1;
    double total = 0;
    double reach = 1.0;
    for (size_t k = 0; k < ev.size() && k <= last; ++k) {
        const DecisionOp& o = t.ops[ev[k]];
        if (o.missing) total += o.impute_cost * reach;
        reach *= o.sel;
    }
    if (!impute_branch && fail_at < 0) total += t.ops[0].impute_cost * reach;
    return total;
}

double DecisionPath::qp_cost(const DecisionTree& t) const {
    auto ev = evaluated_ops(t, impute_branch);
    size_t last = fail_at >= 0 ? static_cast<size_t>(fail_at) : ev.size() - 1;
    double total = 0;
    for (size_t k = 0; k < ev.size() && k <= last; ++k)
        total += qp_of_op(t, impute_branch, ev[k]);
    return total;
}

std::vector<DecisionPath> enumerate_paths(const DecisionTree& t, bool impute_branch) {
    auto ev = evaluated_ops(t, impute_branch);
    std::vector<DecisionPath> out;
    for (size_t k = 0; k < ev.size(); ++k)
        out.push_back({impute_branch, static_cast<int>(k)});
    out.push_back({impute_branch, -1});
    return out;
}

Choice decide_adaptive(const DecisionTree& t) {
    double d_imp = expected_imputation_cost(t, true) - expected_imputation_cost(t, false);
    double d_qp = expected_qp_cost(t, true) - expected_qp_cost(t, false);
    return (d_imp + d_qp) < 0 ? Choice::Impute : Choice::Delay;
}

}  // namespace quip
