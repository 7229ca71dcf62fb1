#include "quip/storage.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace quip {

namespace fs = std::filesystem;
using nlohmann::json;

int TableSchema::col_index(const std::string& col) const {
    for (size_t i = 0; i < cols.size(); ++i)
        if (cols[i].name == col) return static_cast<int>(i);
    return -1;
}

int TableSchema::require_col(const std::string& col) const {
    int i = col_index(col);
    if (i < 0) throw Error("bind", "table '" + name + "' has no column '" + col + "'");
    return i;
}

void MissingCounter::init(const std::vector<Table>& tables) {
    counts_.assign(tables.size(), {});
    for (size_t t = 0; t < tables.size(); ++t) {
        counts_[t].assign(tables[t].schema.cols.size(), 0);
        for (const auto& row : tables[t].rows)
            for (size_t c = 0; c < row.miss.size(); ++c)
                if (row.miss[c]) ++counts_[t][c];
    }
}

void MissingCounter::decrement(int table, int col) {
    int& c = counts_[table][col];
    if (c <= 0) throw Error("exec", "missing counter underflow");
    --c;
}

void GroundTruth::add(const std::string& table, int row, const std::string& col, Value v) {
    map_[{table, row, col}] = std::move(v);
}

const Value& GroundTruth::lookup(const std::string& table, int row,
                                 const std::string& col) const {
    auto it = map_.find({table, row, col});
    if (it == map_.end())
        throw Error("impute", "no ground truth for " + table + "[" + std::to_string(row) +
                                  "]." + col);
    return it->second;
}

int Database::table_index(const std::string& name) const {
    for (size_t i = 0; i < tables.size(); ++i)
        if (tables[i].schema.name == name) return static_cast<int>(i);
    return -1;
}

const Table& Database::require_table(const std::string& name) const {
    int i = table_index(name);
    if (i < 0) throw Error("bind", "unknown table '" + name + "'");
    return tables[i];
}

int Database::missing_count(const std::string& table, const std::string& col) const {
    int t = table_index(table);
    if (t < 0) throw Error("bind", "unknown table '" + table + "'");
    int c = tables[t].schema.require_col(col);
    return missing.count(t, c);
}

int Database::total_missing() const {
    int n = 0;
    for (size_t t = 0; t < tables.size(); ++t)
        for (size_t c = 0; c < tables[t].schema.cols.size(); ++c)
            n += missing.count(static_cast<int>(t), static_cast<int>(c));
    return n;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

Table load_csv(const std::string& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error("load", "cannot open " + path);
    Table t;
    t.schema = schema;
    std::string line;
    if (!std::getline(in, line)) return t;  // empty file: zero rows
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    if (header.size() != schema.cols.size())
        throw Error("load", path + ": header arity " + std::to_string(header.size()) +
                                ", schema expects " + std::to_string(schema.cols.size()));
    for (size_t i = 0; i < header.size(); ++i)
        if (lower(header[i]) != schema.cols[i].name)
            throw Error("load", path + ": header column '" + header[i] +
                                    "' does not match schema column '" +
                                    schema.cols[i].name + "'");
    int rowno = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != schema.cols.size())
            throw Error("load", path + " row " + std::to_string(rowno + 1) + ": " +
                                    std::to_string(fields.size()) + " fields, expected " +
                                    std::to_string(schema.cols.size()));
        BaseTuple row;
        row.vals.resize(fields.size());
        row.miss.assign(fields.size(), 0);
        for (size_t c = 0; c < fields.size(); ++c) {
            const std::string& f = fields[c];
            if (f == "\\N") {
                row.vals[c] = Value::null();
            } else if (f == "\\M") {
                row.vals[c] = Value::null();
                row.miss[c] = 1;
            } else {
                try {
                    row.vals[c] = parse_typed(f, schema.cols[c].type);
                } catch (const Error& e) {
                    throw Error("load", path + " row " + std::to_string(rowno + 1) +
                                            ", column '" + schema.cols[c].name +
                                            "': " + e.what());
                }
            }
        }
        row.tid = static_cast<Tid>(rowno);  // re-packed with table ordinal at db level
        t.rows.push_back(std::move(row));
        ++rowno;
    }
    return t;
}

void write_csv(const Table& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("load", "cannot write " + path);
    for (size_t c = 0; c < t.schema.cols.size(); ++c)
        out << (c ? "," : "") << t.schema.cols[c].name;
    out << '\n';
    for (const auto& row : t.rows) {
        for (size_t c = 0; c < row.vals.size(); ++c) {
            if (c) out << ',';
            if (row.miss[c]) out << "\\M";
            else if (row.vals[c].is_null()) out << "\\N";
            else out << csv_escape(render_value(row.vals[c]));
        }
        out << '\n';
    }
}

static TableSchema schema_from_json(const json& j) {
    TableSchema s;
    s.name = lower(j.at("name").get<std::string>());
    for (const auto& c : j.at("columns")) {
        ColumnDef d;
        d.name = lower(c.at("name").get<std::string>());
        d.type = attr_type_from_name(c.at("type").get<std::string>());
        s.cols.push_back(std::move(d));
    }
    return s;
}

Database load_database(const std::string& dir) {
    fs::path root(dir);
    std::ifstream in(root / "schema.json");
    if (!in) throw Error("load", "cannot open " + (root / "schema.json").string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw Error("load", std::string("schema.json: ") + e.what());
    }
    Database db;
    for (const auto& tj : j.at("tables")) {
        TableSchema s = schema_from_json(tj);
        Table t = load_csv((root / (s.name + ".csv")).string(), s);
        int tidx = static_cast<int>(db.tables.size());
        for (size_t r = 0; r < t.rows.size(); ++r)
            t.rows[r].tid = make_tid(tidx, static_cast<int>(r));
        db.tables.push_back(std::move(t));
    }
    db.missing.init(db.tables);

    fs::path gt = root / "ground_truth.csv";
    if (fs::exists(gt)) {
        std::ifstream gin(gt);
        std::string line;
        std::getline(gin, line);  // header: table,tid,attribute,value
        while (std::getline(gin, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 4) throw Error("load", "ground_truth.csv: expected 4 columns");
            std::string table = lower(f[0]);
            int row = std::stoi(f[1]);
            std::string col = lower(f[2]);
            int t = db.table_index(table);
            if (t < 0) throw Error("load", "ground_truth.csv: unknown table " + table);
            int c = db.tables[t].schema.require_col(col);
            db.gt.add(table, row, col, parse_typed(f[3], db.tables[t].schema.cols[c].type));
        }
    }
    return db;
}

void save_database(const Database& db, const std::string& dir) {
    fs::path root(dir);
    fs::create_directories(root);
    json j;
    j["tables"] = json::array();
    for (const auto& t : db.tables) {
        json tj;
        tj["name"] = t.schema.name;
        tj["columns"] = json::array();
        for (const auto& c : t.schema.cols)
            tj["columns"].push_back({{"name", c.name}, {"type", attr_type_name(c.type)}});
        j["tables"].push_back(tj);
        write_csv(t, (root / (t.schema.name + ".csv")).string());
    }
    std::ofstream out(root / "schema.json");
    out << j.dump(2) << '\n';
    // Sidecar covers every missing cell so the oracle imputer never guesses.
    std::ofstream gout(root / "ground_truth.csv");
    gout << "table,tid,attribute,value\n";
    for (const auto& t : db.tables) {
        for (const auto& row : t.rows) {
            for (size_t c = 0; c < row.miss.size(); ++c) {
                if (!row.miss[c]) continue;
                const Value& v = db.gt.lookup(t.schema.name, tid_row(row.tid),
                                              t.schema.cols[c].name);
                gout << t.schema.name << ',' << tid_row(row.tid) << ','
                     << t.schema.cols[c].name << ',' << csv_escape(render_value(v)) << '\n';
            }
        }
    }
}

}  // namespace quip
