#include "rlq/scenario_io.hpp"

#include "rlq/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace rlq {

namespace {

namespace pt = boost::property_tree;

const std::set<std::string> kRootKeys{"horizon", "steps", "n", "k", "d", "x0", "F"};
const char* const kTableKeys[] = {"A", "B", "C", "D", "E", "L", "S", "R", "G"};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_number(const std::string& raw, const std::string& where) {
    const std::string s = trim(raw);
    if (s.empty()) throw ParseError(where + ": empty number");
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || errno == ERANGE) {
        throw ParseError(where + ": cannot parse '" + s + "' as a number");
    }
    return v;
}

std::vector<double> parse_list(const std::string& body, const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number(item, where));
    if (!out.empty() && trim(item).empty()) throw ParseError(where + ": trailing comma");
    return out;
}

Matrix from_row_major(const std::vector<double>& v, int rows, int cols) {
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    }
    return m;
}

/// Parses one table value into `steps` entries of shape rows x cols.
MatrixTable parse_table(const std::string& raw, int rows, int cols, int steps, const std::filesystem::path& base_dir,
                        const std::string& where) {
    const std::string s = trim(raw);
    const auto need = static_cast<std::size_t>(rows) * cols;
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        const std::filesystem::path file = base_dir / s.substr(1, s.size() - 2);
        std::ifstream in(file);
        if (!in) throw ParseError(where + ": cannot open " + file.string());
        MatrixTable out;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            const std::string lw = where + " (" + file.filename().string() + ":" + std::to_string(lineno) + ")";
            const auto v = parse_list(t, lw);
            if (v.size() != need) {
                throw ParseError(lw + ": expected " + std::to_string(need) + " entries, got " + std::to_string(v.size()));
            }
            out.push_back(from_row_major(v, rows, cols));
        }
        if (static_cast<int>(out.size()) != steps) {
            throw ParseError(where + ": " + file.filename().string() + " has " + std::to_string(out.size()) +
                             " rows, expected one per step (" + std::to_string(steps) + ")");
        }
        return out;
    }
    std::vector<double> v;
    if (s.size() >= 2 && s.front() == '[' && s.back() == ']') {
        v = parse_list(s.substr(1, s.size() - 2), where);
    } else {
        v.push_back(parse_number(s, where));
    }
    if (v.size() != need) {
        throw ParseError(where + ": expected " + std::to_string(need) + " entries (" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "), got " + std::to_string(v.size()));
    }
    return MatrixTable(static_cast<std::size_t>(steps), from_row_major(v, rows, cols));
}

int parse_int(const pt::ptree& root, const std::string& key, std::optional<int> fallback) {
    const auto v = root.get_optional<std::string>(key);
    if (!v) {
        if (fallback) return *fallback;
        throw ParseError("missing required key '" + key + "'");
    }
    const double x = parse_number(*v, key);
    if (x != std::floor(x) || std::abs(x) > 1e9) throw ParseError(key + ": expected an integer");
    return static_cast<int>(x);
}

std::vector<double> scalar_column(const MatrixTable& t) {
    std::vector<double> out;
    out.reserve(t.size());
    for (const auto& m : t) out.push_back(m(0, 0));
    return out;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string inline_list(const Matrix& m) {
    std::string s = "[";
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (r + c > 0) s += ", ";
            s += format_double(m(r, c));
        }
    }
    return s + "]";
}

bool is_constant(const MatrixTable& t) {
    for (const auto& m : t) {
        if (!(m.array() == t.front().array()).all()) return false;
    }
    return true;
}

MatrixTable scalar_table(const std::vector<double>& v) {
    MatrixTable out;
    for (double x : v) out.push_back(Matrix::Constant(1, 1, x));
    return out;
}

}  // namespace

ScenarioSet parse_scenario(const std::string& text, const std::filesystem::path& base_dir) {
    pt::ptree root;
    try {
        std::istringstream in(text);
        pt::read_ini(in, root);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError("line " + std::to_string(e.line()) + ": " + e.message());
    }
    std::map<int, const pt::ptree*> sections;
    for (const auto& [key, node] : root) {
        if (!node.empty()) {
            if (key.rfind("scenario", 0) != 0) throw ParseError("unknown section [" + key + "]");
            const std::string idx = key.substr(8);
            if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos) {
                throw ParseError("unknown section [" + key + "]");
            }
            sections[std::stoi(idx)] = &node;
        } else if (!kRootKeys.count(key)) {
            throw ParseError("unknown key '" + key + "'");
        }
    }
    if (sections.empty()) throw ParseError("no [scenarioN] sections");
    int expect = 1;
    for (const auto& [idx, node] : sections) {
        if (idx != expect++) throw ParseError("scenario sections must be numbered 1..K without gaps");
    }

    const auto horizon_s = root.get_optional<std::string>("horizon");
    if (!horizon_s) throw ParseError("missing required key 'horizon'");
    const double horizon = parse_number(*horizon_s, "horizon");
    const int steps = parse_int(root, "steps", std::nullopt);
    const int n = parse_int(root, "n", std::nullopt);
    const int k = parse_int(root, "k", std::nullopt);
    const int d = parse_int(root, "d", 1);
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ParseError("horizon must be positive and finite");
    if (steps < 1) throw ParseError("steps must be at least 1");
    if (n < 1 || k < 1) throw ParseError("n and k must be at least 1");
    if (d != 1) throw ParseError("LQ scenario files support d = 1 only");

    const TimeGrid grid(horizon, steps);
    Vector x0 = Vector::Zero(n);
    if (const auto v = root.get_optional<std::string>("x0")) {
        x0 = parse_table(*v, n, 1, 1, base_dir, "x0").front();
    }
    std::vector<double> F(static_cast<std::size_t>(steps), 0.0);
    if (const auto v = root.get_optional<std::string>("F")) {
        F = scalar_column(parse_table(*v, 1, 1, steps, base_dir, "F"));
    }

    std::vector<LQScenario> scenarios;
    for (const auto& [idx, node] : sections) {
        const std::string sec = "scenario" + std::to_string(idx);
        for (const auto& [key, child] : *node) {
            bool known = false;
            for (const char* t : kTableKeys) known = known || key == t;
            if (!known) throw ParseError("[" + sec + "]: unknown key '" + key + "'");
        }
        auto table = [&](const char* key, int rows, int cols) {
            const auto v = node->get_optional<std::string>(key);
            if (!v) return MatrixTable(static_cast<std::size_t>(steps), Matrix::Zero(rows, cols));
            return parse_table(*v, rows, cols, steps, base_dir, sec + "." + key);
        };
        LQScenario s;
        s.A = table("A", n, n);
        s.B = table("B", n, k);
        s.C = table("C", n, n);
        s.D = table("D", n, k);
        s.E = scalar_column(table("E", 1, 1));
        s.L = table("L", n, n);
        s.S = table("S", k, n);
        s.R = table("R", k, k);
        if (const auto v = node->get_optional<std::string>("G")) {
            const std::string g = trim(*v);
            if (!g.empty() && g.front() == '"') throw ParseError(sec + ".G: terminal weight must be given inline");
            s.G = parse_table(g, n, n, 1, base_dir, sec + ".G").front();
        } else {
            s.G = Matrix::Zero(n, n);
        }
        scenarios.push_back(std::move(s));
    }
    return make_lq_set(grid, x0, std::move(scenarios), std::move(F));
}

ScenarioSet load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open scenario file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void save_scenario_file(const ScenarioSet& set, const std::filesystem::path& path) {
    if (!set.is_lq()) throw UnsupportedError("only LQ scenario sets can be saved");
    const std::filesystem::path dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
    const std::string stem = path.stem().string();
    auto emit = [&](std::ostream& out, const std::string& key, const MatrixTable& t, const std::string& tag) {
        if (is_constant(t)) {
            out << key << " = " << inline_list(t.front()) << "\n";
            return;
        }
        const std::string name = stem + "_" + tag + "_" + key + ".csv";
        std::ofstream csv(dir / name);
        if (!csv) throw InputError("cannot write " + (dir / name).string());
        for (const auto& m : t) {
            std::string line = inline_list(m);
            csv << line.substr(1, line.size() - 2) << "\n";
        }
        out << key << " = \"" << name << "\"\n";
    };
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "horizon = " << format_double(set.grid.horizon()) << "\n";
    out << "steps = " << set.grid.steps() << "\n";
    out << "n = " << set.n << "\n";
    out << "k = " << set.k << "\n";
    out << "d = " << set.d << "\n";
    out << "x0 = " << inline_list(set.x0) << "\n";
    emit(out, "F", scalar_table(set.F), "shared");
    for (int th = 0; th < set.size(); ++th) {
        const LQScenario& s = set.lq[static_cast<std::size_t>(th)];
        const std::string tag = "scenario" + std::to_string(th + 1);
        out << "\n[" << tag << "]\n";
        emit(out, "A", s.A, tag);
        emit(out, "B", s.B, tag);
        emit(out, "C", s.C, tag);
        emit(out, "D", s.D, tag);
        emit(out, "E", scalar_table(s.E), tag);
        emit(out, "L", s.L, tag);
        emit(out, "S", s.S, tag);
        emit(out, "R", s.R, tag);
        out << "G = " << inline_list(s.G) << "\n";
    }
    if (!out) throw InputError("failed writing " + path.string());
}

ScenarioSet with_steps(const ScenarioSet& set, int steps) {
    if (!set.is_lq()) throw UnsupportedError("with_steps needs an LQ scenario set");
    if (steps < 1) throw InputError("steps must be at least 1");
    if (steps == set.grid.steps()) return set;
    auto resample = [&](const MatrixTable& t, const char* name) {
        if (!is_constant(t)) {
            throw InputError(std::string("table ") + name + " varies in time; cannot change the step count");
        }
        return MatrixTable(static_cast<std::size_t>(steps), t.front());
    };
    std::vector<LQScenario> out;
    for (const auto& s : set.lq) {
        LQScenario r;
        r.A = resample(s.A, "A");
        r.B = resample(s.B, "B");
        r.C = resample(s.C, "C");
        r.D = resample(s.D, "D");
        r.E = scalar_column(resample(scalar_table(s.E), "E"));
        r.L = resample(s.L, "L");
        r.S = resample(s.S, "S");
        r.R = resample(s.R, "R");
        r.G = s.G;
        out.push_back(std::move(r));
    }
    const std::vector<double> F = scalar_column(resample(scalar_table(set.F), "F"));
    return make_lq_set(TimeGrid(set.grid.horizon(), steps), set.x0, std::move(out), F);
}

}  // namespace rlq
