#pragma once

// Run configuration, solution files, CSV tables and SVG projections.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cr3bp/connections.hpp"
#include "cr3bp/floquet.hpp"
#include "cr3bp/manifold.hpp"
#include "cr3bp/orbits.hpp"

namespace cr3bp::io {

inline constexpr int kSolutionSchema = 1;
inline constexpr int kConfigSchema = 1;
inline constexpr int kCsvSchema = 1;

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
    double mu = kEarthMoonMu;
    int libration = 1;                 // start point of the primary family (1 or 2)
    std::string pair = "planar";       // "planar" or "vertical"
    int switch_at = 0;                 // continue the family bifurcating at this branch point (1-based), 0 = none
    std::string family = "";           // tag; derived from the start when empty
    int intervals = 100;
    int degree = 4;
    double newton_tol = 1e-8;
    int newton_max_iter = 10;
    double ds0 = 1e-2;
    double ds_min = 1e-8;
    double ds_max = 0.5;
    int max_steps = 200;
    int adapt_every = 3;
    double energy_min = -2.0;
    double energy_max = -1.4;
    std::vector<double> target_energies;
    std::vector<double> target_periods;
    bool stop_at_last_target = false;
    int target_index = 0;              // which target member feeds the eigenfunction stage
    double lambda_seed = 0.0;
    double packet_energy = 0.0;        // continue the packet to this energy when nonzero
    double packet_period = 0.0;        // or to this period
    Section section{};
    double eps = -1e-4;
    int time_sign = 1;
    double tr_target = 0.0;            // sweep stops once T_r exceeds this (0 = off)
    int sweep_steps = 2000;
    double sweep_ds_max = 0.5;
    double max_time = 50.0;            // T_r cap: a sweep past it with eps stalled ends at an obstacle
    int connect_steps = 400;
    int direction = 1;
    double closure_tol = 1e-6;
    double lambda_min = 1e-2;
    std::string output_dir = "out";
    int store_every = 10;
    std::string run_id = "run";
    std::map<std::string, std::string> inputs;   // orbit, packet, manifold, connection, solution, csv

    void validate() const;   // throws ConfigError
};

/// Parse a JSON config; unknown keys and out-of-range values raise ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string dump_config(const RunConfig& c);

/// Baseline settings for the timing run: N = 20, m = 4, 48 continuation steps along V1.
RunConfig v1_timing_config();

FamilySettings family_settings(const RunConfig& c);
ContinuationSettings continuation_settings(const RunConfig& c);

// ---------------------------------------------------------------------------
// Solution files

struct SolutionRecord {
    std::string kind;        // periodic-orbit, eigen-packet, manifold-orbit, coupled-connection
    double mu = kEarthMoonMu;
    MeshedSolution solution;
    std::map<std::string, std::string> meta;
    std::string parent_run;
    int step = -1;
};

/// Full text of a solution file.
std::string serialize(const SolutionRecord& rec);
/// Inverse of serialize; throws IoError on malformed text, schema mismatch or checksum failure.
SolutionRecord parse(const std::string& text);
void save(const SolutionRecord& rec, const std::filesystem::path& path);
SolutionRecord load(const std::filesystem::path& path);

/// Write to a temporary sibling, then rename over the target.
void write_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);
double parse_double(const std::string& s);
std::uint64_t fnv1a64(const std::string& bytes);

SolutionRecord to_record(const PeriodicOrbit& orbit, const MassRatio& mu);
SolutionRecord to_record(const EigenPacket& packet, const MassRatio& mu);
SolutionRecord to_record(const ManifoldOrbit& orbit, const MassRatio& mu);
SolutionRecord to_record(const CoupledConnection& c, const MassRatio& mu);

PeriodicOrbit orbit_from(const SolutionRecord& rec);
EigenPacket packet_from(const SolutionRecord& rec);
ManifoldOrbit manifold_from(const SolutionRecord& rec);
CoupledConnection connection_from(const SolutionRecord& rec);

// ---------------------------------------------------------------------------
// CSV (columns listed in schema/csv_schema.json)

std::string family_csv(const FamilyResult& family, const MassRatio& mu);
std::string libration_csv(const std::vector<LibrationPoint>& points);
std::string sweep_csv(const SweepResult& sweep, const MassRatio& mu);
std::string packet_csv(const PacketFamily& family, const MassRatio& mu);
std::string connection_csv(const ConnectionFamily& family);

/// Rows of a CSV file with a header line, split on commas.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    int column(const std::string& name) const;   // throws IoError
};
CsvTable parse_csv(const std::string& text);

// ---------------------------------------------------------------------------
// SVG

struct SvgOptions {
    int width = 640;
    int height = 480;
    int samples = 2000;
};

/// Projection of the 6-component blocks of a solution onto coordinates (ix, iy), one polyline per block.
std::string projection_svg(const MeshedSolution& s, int ix, int iy, const SvgOptions& opts = {});
/// Polyline through (x, y) pairs with axis labels.
std::string diagram_svg(const std::vector<double>& x, const std::vector<double>& y, const std::string& xlabel,
                        const std::string& ylabel, const SvgOptions& opts = {});

}  // namespace cr3bp::io
