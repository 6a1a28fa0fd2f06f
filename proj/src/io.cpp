#include "cr3bp/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cr3bp/errors.hpp"

namespace cr3bp::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <class T>
void take(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config value out of range: " + what);
}

std::string join_numbers(const Eigen::Ref<const Vec>& v) {
    std::string out;
    for (int i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += format_double(v(i));
    }
    return out;
}

Vec split_numbers(const std::string& s) {
    std::istringstream in(s);
    std::vector<double> xs;
    std::string tok;
    while (in >> tok) xs.push_back(parse_double(tok));
    return Eigen::Map<Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

const std::string& meta_at(const SolutionRecord& rec, const std::string& key) {
    auto it = rec.meta.find(key);
    if (it == rec.meta.end()) throw IoError("solution file lacks '" + key + "'");
    return it->second;
}

void expect_kind(const SolutionRecord& rec, const std::string& kind, int dim) {
    if (rec.kind != kind) throw IoError("expected a " + kind + " file, found " + rec.kind);
    if (rec.solution.dim() != dim) throw IoError(kind + " files hold " + std::to_string(dim) + " components");
}

void put_section(SolutionRecord& rec, const Section& s) {
    rec.meta["section.index"] = std::to_string(s.index);
    rec.meta["section.value"] = format_double(s.value);
    rec.meta["section.crossing"] = std::to_string(s.crossing);
}

Section get_section(const SolutionRecord& rec) {
    Section s;
    s.index = std::stoi(meta_at(rec, "section.index"));
    s.value = parse_double(meta_at(rec, "section.value"));
    s.crossing = std::stoi(meta_at(rec, "section.crossing"));
    return s;
}

std::string csv_join(const std::vector<std::string>& xs, char sep) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        out += xs[i];
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
    require(mu > 0.0 && mu <= 0.5, "mu in (0, 1/2]");
    require(libration >= 1 && libration <= 3, "libration in 1..3");
    require(pair == "planar" || pair == "vertical", "pair is planar or vertical");
    require(switch_at >= 0, "switch_at >= 0");
    require(intervals >= 4 && intervals <= 20000, "intervals in 4..20000");
    require(degree >= 2 && degree <= 7, "degree in 2..7");
    require(newton_tol > 0.0 && newton_tol <= 1e-2, "newton_tol in (0, 1e-2]");
    require(newton_max_iter >= 1 && newton_max_iter <= 200, "newton_max_iter in 1..200");
    require(ds_min > 0.0 && ds_min <= ds0 && ds0 <= ds_max, "0 < ds_min <= ds0 <= ds_max");
    require(max_steps >= 1 && max_steps <= 1000000, "max_steps in 1..1e6");
    require(adapt_every >= 0, "adapt_every >= 0");
    require(energy_min < energy_max, "energy_min < energy_max");
    require(target_index >= 0, "target_index >= 0");
    require(section.index >= 0 && section.index <= 5 && section.crossing >= 1, "section index 0..5, crossing >= 1");
    require(eps != 0.0 && std::abs(eps) < 1.0, "0 < |eps| < 1");
    require(time_sign == 1 || time_sign == -1, "time_sign is +1 or -1");
    require(direction == 1 || direction == -1, "direction is +1 or -1");
    require(tr_target >= 0.0, "tr_target >= 0");
    require(sweep_steps >= 1 && connect_steps >= 1, "sweep_steps and connect_steps >= 1");
    require(sweep_ds_max > 0.0, "sweep_ds_max > 0");
    require(max_time > 0.0, "max_time > 0");
    require(closure_tol > 0.0 && lambda_min >= 0.0, "closure_tol > 0, lambda_min >= 0");
    require(store_every >= 0, "store_every >= 0");
    require(!output_dir.empty() && !run_id.empty(), "output_dir and run_id nonempty");
    static const std::set<std::string> input_keys = {"orbit", "packet", "manifold", "connection", "solution", "csv"};
    for (const auto& [k, v] : inputs) require(input_keys.count(k) > 0, "input name '" + k + "'");
}

RunConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    static const std::set<std::string> known = {
        "schema", "mu", "libration", "pair", "switch_at", "family", "intervals", "degree", "newton_tol",
        "newton_max_iter", "ds0", "ds_min", "ds_max", "max_steps", "adapt_every", "energy_min", "energy_max",
        "target_energies", "target_periods", "stop_at_last_target", "target_index", "lambda_seed", "packet_energy",
        "packet_period", "section", "eps", "time_sign", "tr_target", "sweep_steps", "sweep_ds_max", "max_time",
        "connect_steps", "direction", "closure_tol", "lambda_min", "output_dir", "store_every", "run_id", "inputs"};
    reject_unknown(j, known, "");
    int schema = kConfigSchema;
    take(j, "schema", schema);
    if (schema != kConfigSchema) throw ConfigError("config schema " + std::to_string(schema) + " is not supported");
    RunConfig c;
    take(j, "mu", c.mu);
    take(j, "libration", c.libration);
    take(j, "pair", c.pair);
    take(j, "switch_at", c.switch_at);
    take(j, "family", c.family);
    take(j, "intervals", c.intervals);
    take(j, "degree", c.degree);
    take(j, "newton_tol", c.newton_tol);
    take(j, "newton_max_iter", c.newton_max_iter);
    take(j, "ds0", c.ds0);
    take(j, "ds_min", c.ds_min);
    take(j, "ds_max", c.ds_max);
    take(j, "max_steps", c.max_steps);
    take(j, "adapt_every", c.adapt_every);
    take(j, "energy_min", c.energy_min);
    take(j, "energy_max", c.energy_max);
    take(j, "target_energies", c.target_energies);
    take(j, "target_periods", c.target_periods);
    take(j, "stop_at_last_target", c.stop_at_last_target);
    take(j, "target_index", c.target_index);
    take(j, "lambda_seed", c.lambda_seed);
    take(j, "packet_energy", c.packet_energy);
    take(j, "packet_period", c.packet_period);
    if (j.contains("section")) {
        const json& s = j.at("section");
        reject_unknown(s, {"index", "value", "crossing"}, "section.");
        take(s, "index", c.section.index);
        take(s, "value", c.section.value);
        take(s, "crossing", c.section.crossing);
    }
    take(j, "eps", c.eps);
    take(j, "time_sign", c.time_sign);
    take(j, "tr_target", c.tr_target);
    take(j, "sweep_steps", c.sweep_steps);
    take(j, "sweep_ds_max", c.sweep_ds_max);
    take(j, "max_time", c.max_time);
    take(j, "connect_steps", c.connect_steps);
    take(j, "direction", c.direction);
    take(j, "closure_tol", c.closure_tol);
    take(j, "lambda_min", c.lambda_min);
    take(j, "output_dir", c.output_dir);
    take(j, "store_every", c.store_every);
    take(j, "run_id", c.run_id);
    take(j, "inputs", c.inputs);
    c.validate();
    return c;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_file(path)); }

std::string dump_config(const RunConfig& c) {
    json j;
    j["schema"] = kConfigSchema;
    j["mu"] = c.mu;
    j["libration"] = c.libration;
    j["pair"] = c.pair;
    j["switch_at"] = c.switch_at;
    j["family"] = c.family;
    j["intervals"] = c.intervals;
    j["degree"] = c.degree;
    j["newton_tol"] = c.newton_tol;
    j["newton_max_iter"] = c.newton_max_iter;
    j["ds0"] = c.ds0;
    j["ds_min"] = c.ds_min;
    j["ds_max"] = c.ds_max;
    j["max_steps"] = c.max_steps;
    j["adapt_every"] = c.adapt_every;
    j["energy_min"] = c.energy_min;
    j["energy_max"] = c.energy_max;
    j["target_energies"] = c.target_energies;
    j["target_periods"] = c.target_periods;
    j["stop_at_last_target"] = c.stop_at_last_target;
    j["target_index"] = c.target_index;
    j["lambda_seed"] = c.lambda_seed;
    j["packet_energy"] = c.packet_energy;
    j["packet_period"] = c.packet_period;
    j["section"] = {{"index", c.section.index}, {"value", c.section.value}, {"crossing", c.section.crossing}};
    j["eps"] = c.eps;
    j["time_sign"] = c.time_sign;
    j["tr_target"] = c.tr_target;
    j["sweep_steps"] = c.sweep_steps;
    j["sweep_ds_max"] = c.sweep_ds_max;
    j["max_time"] = c.max_time;
    j["connect_steps"] = c.connect_steps;
    j["direction"] = c.direction;
    j["closure_tol"] = c.closure_tol;
    j["lambda_min"] = c.lambda_min;
    j["output_dir"] = c.output_dir;
    j["store_every"] = c.store_every;
    j["run_id"] = c.run_id;
    j["inputs"] = c.inputs;
    return j.dump(2) + "\n";
}

RunConfig v1_timing_config() {
    RunConfig c;
    c.libration = 1;
    c.pair = "vertical";
    c.family = "V1";
    c.intervals = 20;
    c.degree = 4;
    c.max_steps = 48;
    c.adapt_every = 0;
    c.run_id = "v1-timing";
    return c;
}

ContinuationSettings continuation_settings(const RunConfig& c) {
    ContinuationSettings s;
    s.ds0 = c.ds0;
    s.ds_min = c.ds_min;
    s.ds_max = c.ds_max;
    s.max_steps = c.max_steps;
    s.adapt_every = c.adapt_every;
    s.newton.tol = c.newton_tol;
    s.newton.max_iter = c.newton_max_iter;
    return s;
}

FamilySettings family_settings(const RunConfig& c) {
    FamilySettings f;
    f.continuation = continuation_settings(c);
    f.mesh_intervals = c.intervals;
    f.degree = c.degree;
    f.energy_min = c.energy_min;
    f.energy_max = c.energy_max;
    f.target_energies = c.target_energies;
    f.target_periods = c.target_periods;
    f.stop_at_last_target = c.stop_at_last_target;
    return f;
}

// ---------------------------------------------------------------------------
// Solution files

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
    double x = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, x);
    if (res.ec != std::errc() || res.ptr != last) {
        if (s == "inf") return INFINITY;
        if (s == "-inf") return -INFINITY;
        if (s == "nan") return NAN;
        throw IoError("malformed number '" + s + "'");
    }
    return x;
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string serialize(const SolutionRecord& rec) {
    const MeshedSolution& s = rec.solution;
    std::string body = join_numbers(Eigen::Map<const Vec>(s.mesh().nodes.data(), s.mesh().nodes.size())) + "\n";
    for (int k = 0; k < s.values().rows(); ++k) body += join_numbers(s.values().row(k).transpose()) + "\n";

    std::ostringstream h;
    h << "cr3bp-solution\n";
    h << "schema: " << kSolutionSchema << "\n";
    h << "kind: " << rec.kind << "\n";
    h << "mu: " << format_double(rec.mu) << "\n";
    h << "dim: " << s.dim() << "\n";
    h << "degree: " << s.mesh().degree << "\n";
    h << "intervals: " << s.mesh().intervals() << "\n";
    h << "scalar-names: " << csv_join(s.scalars().names, ' ') << "\n";
    h << "scalar-values: " << join_numbers(s.scalars().values) << "\n";
    for (const auto& [k, v] : rec.meta) {
        if (k.find_first_of(" :\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw IoError("metadata key or value not representable: " + k);
        }
        h << "meta." << k << ": " << v << "\n";
    }
    h << "provenance-run: " << rec.parent_run << "\n";
    h << "provenance-step: " << rec.step << "\n";
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
    h << "checksum: fnv1a64 " << hex << "\n";
    h << "body\n";
    return h.str() + body;
}

SolutionRecord parse(const std::string& text) {
    const std::size_t mark = text.find("\nbody\n");
    if (text.rfind("cr3bp-solution\n", 0) != 0 || mark == std::string::npos) throw IoError("not a solution file");
    const std::string body = text.substr(mark + 6);
    std::map<std::string, std::string> head;
    std::istringstream in(text.substr(0, mark + 1));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const std::size_t colon = line.find(": ");
        if (colon == std::string::npos) {
            if (line.size() && line.back() == ':') head[line.substr(0, line.size() - 1)] = "";
            else throw IoError("malformed header line '" + line + "'");
            continue;
        }
        head[line.substr(0, colon)] = line.substr(colon + 2);
    }
    auto need = [&](const std::string& k) -> const std::string& {
        auto it = head.find(k);
        if (it == head.end()) throw IoError("solution header lacks '" + k + "'");
        return it->second;
    };
    const int schema = std::stoi(need("schema"));
    if (schema != kSolutionSchema) {
        throw IoError("solution schema " + std::to_string(schema) + " differs from supported " +
                      std::to_string(kSolutionSchema));
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
    if (need("checksum") != std::string("fnv1a64 ") + hex) throw IoError("checksum does not match the body");

    SolutionRecord rec;
    rec.kind = need("kind");
    rec.mu = parse_double(need("mu"));
    const int dim = std::stoi(need("dim"));
    const int degree = std::stoi(need("degree"));
    const int intervals = std::stoi(need("intervals"));
    std::vector<std::string> names;
    {
        std::istringstream ns(need("scalar-names"));
        std::string n;
        while (ns >> n) names.push_back(n);
    }
    ScalarSet sc(names);
    const Vec vals = split_numbers(need("scalar-values"));
    if (vals.size() != sc.size()) throw IoError("scalar names and values disagree");
    sc.values = vals;
    for (const auto& [k, v] : head) {
        if (k.rfind("meta.", 0) == 0) rec.meta[k.substr(5)] = v;
    }
    rec.parent_run = head.count("provenance-run") ? head["provenance-run"] : "";
    rec.step = std::stoi(need("provenance-step"));

    std::istringstream bs(body);
    std::getline(bs, line);
    const Vec nodes = split_numbers(line);
    if (nodes.size() != intervals + 1) throw IoError("mesh node count does not match the header");
    Mesh mesh;
    mesh.degree = degree;
    mesh.nodes.assign(nodes.data(), nodes.data() + nodes.size());
    mesh.validate();
    MeshedSolution s(mesh, dim, sc);
    for (int k = 0; k < mesh.points(); ++k) {
        if (!std::getline(bs, line)) throw IoError("solution body is truncated");
        const Vec row = split_numbers(line);
        if (row.size() != dim) throw IoError("solution row has the wrong width");
        s.values().row(k) = row.transpose();
    }
    rec.solution = std::move(s);
    return rec;
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save(const SolutionRecord& rec, const fs::path& path) { write_atomic(path, serialize(rec)); }
SolutionRecord load(const fs::path& path) { return parse(read_file(path)); }

SolutionRecord to_record(const PeriodicOrbit& orbit, const MassRatio& mu) {
    SolutionRecord r;
    r.kind = "periodic-orbit";
    r.mu = mu.value();
    r.solution = orbit.solution;
    r.meta["family"] = orbit.family.empty() ? "-" : orbit.family;
    return r;
}

SolutionRecord to_record(const EigenPacket& packet, const MassRatio& mu) {
    SolutionRecord r;
    r.kind = "eigen-packet";
    r.mu = mu.value();
    r.solution = packet.solution;
    r.meta["sign"] = std::to_string(packet.sign);
    return r;
}

SolutionRecord to_record(const ManifoldOrbit& orbit, const MassRatio& mu) {
    SolutionRecord r;
    r.kind = "manifold-orbit";
    r.mu = mu.value();
    r.solution = orbit.r;
    r.meta["u0"] = join_numbers(orbit.u0);
    r.meta["v0"] = join_numbers(orbit.v0);
    r.meta["lambda"] = format_double(orbit.lambda);
    r.meta["base_energy"] = format_double(orbit.base_energy);
    r.meta["time_sign"] = std::to_string(orbit.time_sign);
    put_section(r, orbit.section);
    return r;
}

SolutionRecord to_record(const CoupledConnection& c, const MassRatio& mu) {
    SolutionRecord r;
    r.kind = "coupled-connection";
    r.mu = mu.value();
    r.solution = c.s;
    r.meta["time_sign"] = std::to_string(c.time_sign);
    r.meta["sign"] = std::to_string(c.sign);
    put_section(r, c.section);
    return r;
}

PeriodicOrbit orbit_from(const SolutionRecord& rec) {
    expect_kind(rec, "periodic-orbit", 6);
    const PeriodicOrbitProblem problem{MassRatio(rec.mu)};
    const std::string fam = meta_at(rec, "family");
    return describe_orbit(problem, rec.solution, fam == "-" ? "" : fam);
}

EigenPacket packet_from(const SolutionRecord& rec) {
    expect_kind(rec, "eigen-packet", 12);
    EigenPacket p;
    p.solution = rec.solution;
    p.sign = std::stoi(meta_at(rec, "sign"));
    return p;
}

ManifoldOrbit manifold_from(const SolutionRecord& rec) {
    expect_kind(rec, "manifold-orbit", 6);
    ManifoldOrbit o;
    o.r = rec.solution;
    const Vec u0 = split_numbers(meta_at(rec, "u0")), v0 = split_numbers(meta_at(rec, "v0"));
    if (u0.size() != 6 || v0.size() != 6) throw IoError("manifold file has malformed u0/v0");
    o.u0 = u0;
    o.v0 = v0;
    o.lambda = parse_double(meta_at(rec, "lambda"));
    o.base_energy = parse_double(meta_at(rec, "base_energy"));
    o.time_sign = std::stoi(meta_at(rec, "time_sign"));
    o.section = get_section(rec);
    return o;
}

CoupledConnection connection_from(const SolutionRecord& rec) {
    expect_kind(rec, "coupled-connection", 18);
    CoupledConnection c;
    c.s = rec.solution;
    c.time_sign = std::stoi(meta_at(rec, "time_sign"));
    c.sign = std::stoi(meta_at(rec, "sign"));
    c.section = get_section(rec);
    return c;
}

// ---------------------------------------------------------------------------
// CSV

std::string family_csv(const FamilyResult& family, const MassRatio& mu) {
    (void)mu;
    std::string out = "step,family,T,E,sigma,energy_spread,max_abs_z,max_multiplier_modulus,events\n";
    for (std::size_t i = 0; i < family.orbits.size(); ++i) {
        const PeriodicOrbit& o = family.orbits[i];
        const std::string events = i < family.records.size() ? csv_join(family.records[i].events, ';') : "";
        const double zmax = o.solution.values().col(2).cwiseAbs().maxCoeff();
        const double mmax = o.multipliers.size() ? o.multipliers.cwiseAbs().maxCoeff() : 0.0;
        const int step = i < family.records.size() ? family.records[i].index : static_cast<int>(i) + 1;
        out += std::to_string(step) + "," + o.family + "," + format_double(o.period) + "," + format_double(o.energy) +
               "," + format_double(o.sigma) + "," + format_double(o.energy_spread) + "," + format_double(zmax) + "," +
               format_double(mmax) + "," + events + "\n";
    }
    return out;
}

std::string libration_csv(const std::vector<LibrationPoint>& points) {
    std::string out = "index,x,y,z";
    for (int k = 1; k <= 6; ++k) out += ",eig" + std::to_string(k) + "_re,eig" + std::to_string(k) + "_im";
    out += "\n";
    for (const auto& p : points) {
        out += std::to_string(p.index) + "," + format_double(p.state(0)) + "," + format_double(p.state(1)) + "," +
               format_double(p.state(2));
        for (const auto& e : p.eigenvalues) out += "," + format_double(e.real()) + "," + format_double(e.imag());
        out += "\n";
    }
    return out;
}

std::string sweep_csv(const SweepResult& sweep, const MassRatio& mu) {
    std::string out = "step,eps,T_r,intervals,energy_spread,arclength\n";
    for (std::size_t i = 0; i < sweep.orbits.size(); ++i) {
        const ManifoldOrbit& o = sweep.orbits[i];
        const StepRecord* rec = i < sweep.records.size() ? &sweep.records[i] : nullptr;
        out += std::to_string(rec ? rec->index : static_cast<int>(i) + 1) + "," + format_double(o.eps()) + "," +
               format_double(o.integration_time()) + "," + std::to_string(o.r.mesh().intervals()) + "," +
               format_double(energy_spread(o.r, mu)) + "," + format_double(rec ? rec->arclength : 0.0) + "\n";
    }
    return out;
}

std::string packet_csv(const PacketFamily& family, const MassRatio& mu) {
    std::string out = "step,T,E,lambda,sigma,rho\n";
    for (std::size_t i = 0; i < family.packets.size(); ++i) {
        const EigenPacket& p = family.packets[i];
        out += std::to_string(i + 1) + "," + format_double(p.period()) + "," + format_double(packet_energy(p, mu)) +
               "," + format_double(p.lambda()) + "," + format_double(p.sigma()) + "," + format_double(p.rho()) + "\n";
    }
    return out;
}

std::string connection_csv(const ConnectionFamily& family) {
    std::string out =
        "step,E,lambda,log_abs_eps,eps_sign,T,T_r,windings,libration,period,rotation_number,final_max_z,hints\n";
    for (const auto& r : family.records) {
        out += std::to_string(r.step) + "," + format_double(r.energy) + "," + format_double(r.lambda) + "," +
               format_double(std::log(std::abs(r.eps))) + "," + (r.eps < 0.0 ? "-1" : "1") + "," +
               format_double(r.base_period) + "," + format_double(r.integration_time) + "," +
               std::to_string(r.stats.windings) + "," + std::to_string(r.stats.libration_index) + "," +
               format_double(r.period) + "," + format_double(r.stats.rotation_number) + "," +
               format_double(r.stats.final_max_z) + "," + csv_join(r.hints, ';') + "\n";
    }
    return out;
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    throw IoError("CSV has no column '" + name + "'");
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    if (!std::getline(in, line)) throw IoError("empty CSV");
    t.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        t.rows.push_back(split(line));
    }
    return t;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

struct Frame {
    double x0, x1, y0, y1;
    int w, h, pad = 50;
    double sx(double x) const { return pad + (x - x0) / (x1 - x0) * (w - 2 * pad); }
    double sy(double y) const { return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad); }
};

Frame frame_for(const std::vector<std::vector<std::pair<double, double>>>& lines, const SvgOptions& o) {
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    for (const auto& l : lines) {
        for (const auto& [x, y] : l) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
    if (!(x1 > x0)) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if (!(y1 > y0)) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    return Frame{x0, x1, y0, y1, o.width, o.height};
}

std::string render(const std::vector<std::vector<std::pair<double, double>>>& lines, const std::string& xlabel,
                   const std::string& ylabel, const SvgOptions& o) {
    static const char* colours[] = {"#1f4e9c", "#c0392b", "#27ae60", "#8e44ad"};
    const Frame f = frame_for(lines, o);
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << o.width << "\" height=\"" << o.height
      << "\" viewBox=\"0 0 " << o.width << " " << o.height << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<rect x=\"" << f.pad << "\" y=\"" << f.pad << "\" width=\"" << o.width - 2 * f.pad << "\" height=\""
      << o.height - 2 * f.pad << "\" fill=\"none\" stroke=\"#888\"/>\n";
    auto label = [&](double x, double y, const std::string& t, const char* anchor) {
        s << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\""
          << anchor << "\">" << t << "</text>\n";
    };
    label(o.width / 2.0, o.height - 12.0, xlabel, "middle");
    label(14.0, o.height / 2.0, ylabel, "middle");
    label(f.pad, o.height - f.pad + 16.0, format_double(f.x0), "start");
    label(o.width - f.pad, o.height - f.pad + 16.0, format_double(f.x1), "end");
    label(f.pad - 4.0, o.height - f.pad, format_double(f.y0), "end");
    label(f.pad - 4.0, f.pad + 10.0, format_double(f.y1), "end");
    for (std::size_t k = 0; k < lines.size(); ++k) {
        s << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << colours[k % 4] << "\" points=\"";
        char buf[64];
        for (const auto& [x, y] : lines[k]) {
            if (!std::isfinite(x) || !std::isfinite(y)) continue;
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", f.sx(x), f.sy(y));
            s << buf;
        }
        s << "\"/>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace

std::string projection_svg(const MeshedSolution& s, int ix, int iy, const SvgOptions& opts) {
    if (ix < 0 || ix > 5 || iy < 0 || iy > 5) throw OutOfRange("projection coordinates must be in 0..5");
    static const char* names[] = {"x", "y", "z", "vx", "vy", "vz"};
    std::vector<std::vector<std::pair<double, double>>> lines;
    // Eigenfunction blocks (components 6..11 of packets and connections) are not positions: skip them.
    for (int block = 0; block + 6 <= s.dim(); block += 6) {
        if (block == 6) continue;
        std::vector<std::pair<double, double>> pts;
        for (int k = 0; k <= opts.samples; ++k) {
            const Vec y = s.evaluate(static_cast<double>(k) / opts.samples);
            pts.emplace_back(y(block + ix), y(block + iy));
        }
        lines.push_back(std::move(pts));
    }
    return render(lines, names[ix], names[iy], opts);
}

std::string diagram_svg(const std::vector<double>& x, const std::vector<double>& y, const std::string& xlabel,
                        const std::string& ylabel, const SvgOptions& opts) {
    if (x.size() != y.size()) throw DimensionMismatch("diagram needs equally many x and y values");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < x.size(); ++i) pts.emplace_back(x[i], y[i]);
    return render({pts}, xlabel, ylabel, opts);
}

}  // namespace cr3bp::io
