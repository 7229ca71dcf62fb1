#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "quip/value.hpp"

namespace quip {

struct ColumnDef {
    std::string name;
    AttrType type = AttrType::Text;
};

struct TableSchema {
    std::string name;
    std::vector<ColumnDef> cols;

    int col_index(const std::string& col) const;  // -1 when absent
    int require_col(const std::string& col) const;
};

/// One row. `miss[i]` set means vals[i] is NULL *and* awaiting imputation;
/// a NULL with the bit clear is a plain SQL NULL.
struct BaseTuple {
    Tid tid = 0;
    std::vector<Value> vals;
    std::vector<uint8_t> miss;
};

struct Table {
    TableSchema schema;
    std::vector<BaseTuple> rows;
};

/// Per-attribute count of still-missing cells. Decremented exactly once per
/// cell, when the cell is imputed or its tuple is permanently dropped.
class MissingCounter {
public:
    void init(const std::vector<Table>& tables);
    int count(int table, int col) const { return counts_[table][col]; }
    void decrement(int table, int col);

private:
    std::vector<std::vector<int>> counts_;
};

/// (table, row-ordinal, column) -> true value, loaded from the sidecar file.
class GroundTruth {
public:
    void add(const std::string& table, int row, const std::string& col, Value v);
    /// Oracle lookup; throws Error("impute") when the key is absent.
    const Value& lookup(const std::string& table, int row, const std::string& col) const;
    bool empty() const { return map_.empty(); }

private:
    std::map<std::tuple<std::string, int, std::string>, Value> map_;
};

struct Database {
    std::vector<Table> tables;
    GroundTruth gt;
    MissingCounter missing;

    int table_index(const std::string& name) const;  // -1 when absent
    const Table& require_table(const std::string& name) const;
    /// Current missing count for "table.column"; throws on unknown attribute.
    int missing_count(const std::string& table, const std::string& col) const;
    int total_missing() const;
};

/// Loads one CSV with a header row. Cell sentinels: "\N" is NULL, "\M" is
/// missing (NULL + bit). Throws Error("load") on arity or parse failures,
/// naming the offending row.
Table load_csv(const std::string& path, const TableSchema& schema);

void write_csv(const Table& t, const std::string& path);

/// Loads schema.json + one CSV per table + optional ground_truth.csv from a
/// directory.
Database load_database(const std::string& dir);

void save_database(const Database& db, const std::string& dir);

std::vector<std::string> split_csv_line(const std::string& line);
std::string csv_escape(const std::string& field);

}  // namespace quip
