#pragma once

#include <map>
#include <string>
#include <vector>

#include "quip/common.hpp"

namespace quip {

enum class Strategy { Eager, Lazy, Adaptive, Offline };

Strategy strategy_from_name(const std::string& s);
std::string strategy_name(Strategy s);

struct DecisionConfig {
    Strategy strategy = Strategy::Lazy;
    // bootstrap: adaptive decisions stay Delay until the attribute has this
    // many observed imputations; operator selectivities default to 0.5 until
    // the operator has evaluated this many clean tuples
    int attr_bootstrap = 25;
    int op_bootstrap = 100;
    double default_sel = 0.5;
    // scales the imputation side of the cost comparison only
    double impute_cost_multiplier = 1.0;
    // deterministic per-join-test charge (ms); keeps decisions reproducible
    double join_test_cost_ms = 0.001;
    bool blocking_imputer = false;
};

/// Runtime statistics feeding the decision function. Costs are deterministic
/// charges, not wall-clock samples, so reruns reproduce byte-identical
/// decisions.
class Stats {
public:
    void on_imputed(const std::string& attr, double cost_ms);
    /// Clean-tuple evaluation outcome; tuples with a missing evaluated
    /// attribute are excluded from selectivity tallies.
    void on_op_evaluated(int op_id, bool passed);
    void on_join_tested(int op_id, long n_tests);
    void set_join_op(int op_id) { joins_.insert({op_id, {}}).first->second.is_join = true; }

    double impute_cost(const std::string& attr) const;  // 0 until sampled
    long impute_samples(const std::string& attr) const;
    double selectivity(int op_id, const DecisionConfig& cfg) const;
    double tests_per_tuple(int op_id) const;  // T_o; 1 for selections
    double ttjoin(int op_id, const DecisionConfig& cfg) const;

    std::string snapshot_json() const;

private:
    struct AttrStat {
        double sum = 0;
        long n = 0;
    };
    struct OpStat {
        long processed = 0;
        long passed = 0;
        double tests_sum = 0;
        long tests_n = 0;
        bool is_join = false;
    };
    std::map<std::string, AttrStat> impute_;
    std::map<int, OpStat> joins_;
};

// ---------------------------------------------------------------------------
// Decision tree over the operators between the deciding operator and rho.

struct DecisionOp {
    bool is_join = false;
    bool missing = false;     // the tuple's attribute at this operator is missing
    double sel = 0.5;
    double impute_cost = 0;   // cost of imputing that attribute
    double tests = 1.0;       // T_o
    double ttjoin = 0;        // per-test charge; 0 for selections
};

/// ops[0] is the operator making the decision; its attribute is the one
/// being decided (missing by construction). The rest are the downstream
/// operators strictly below rho on the tuple's path.
struct DecisionTree {
    std::vector<DecisionOp> ops;
};

/// On the delay branch the deciding operator does not evaluate (the tuple is
/// preserved), so ops[0] contributes probability 1 and test factor 1 there,
/// and the delayed attribute is imputed at rho after every downstream pass.
double expected_imputation_cost(const DecisionTree& t, bool impute_branch);
double expected_qp_cost(const DecisionTree& t, bool impute_branch);

/// One root-to-leaf outcome of the tree: a pass prefix ending either in a
/// failure (tuple eliminated) or in reaching rho.
struct DecisionPath {
    bool impute_branch = true;
    int fail_at = -1;  // index into evaluated ops; -1 = full pass

    double prob(const DecisionTree& t) const;
    /// Expected imputation cost of the path: each imputation along it is
    /// weighted by the probability of reaching its operator.
    double imputation_cost(const DecisionTree& t) const;
    /// Per-operator processing charge summed along the path.
    double qp_cost(const DecisionTree& t) const;
};

std::vector<DecisionPath> enumerate_paths(const DecisionTree& t, bool impute_branch);

/// Per-operator processing charge QP(o_i): test-count product up to and
/// including i, times the operator's per-test cost.
double qp_of_op(const DecisionTree& t, bool impute_branch, size_t i);

enum class Choice { Impute, Delay };

/// Adaptive rule: impute iff (E[IMP(impute)]-E[IMP(delay)]) +
/// (E[QP(impute)]-E[QP(delay)]) < 0. Ties delay.
Choice decide_adaptive(const DecisionTree& t);

}  // namespace quip
