#include <bit>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fixtures.hpp"

#include "cr3bp/errors.hpp"
#include "cr3bp/io.hpp"

using namespace cr3bp;
using namespace cr3bp::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "cr3bp_io_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string replace_line(std::string text, const std::string& prefix, const std::string& line) {
    const auto a = text.find(prefix);
    REQUIRE(a != std::string::npos);
    const auto b = text.find('\n', a);
    return text.replace(a, b - a, line);
}

}  // namespace

TEST_CASE("shortest decimal form round-trips") {
    for (double x : {0.1, -1.5552, 1e-300, 6.02214076e23, 2.0 / 3.0, -0.0, 5e-324}) {
        CHECK(std::bit_cast<std::uint64_t>(parse_double(format_double(x))) == std::bit_cast<std::uint64_t>(x));
    }
    CHECK_THROWS_AS(parse_double("1.5x"), IoError);
    CHECK_THROWS_AS(parse_double(""), IoError);
}

TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("orbit file round-trip is bit-identical") {
    const PeriodicOrbit& o = fixtures::lyapunov_orbit();
    SolutionRecord rec = to_record(o, fixtures::mu());
    rec.parent_run = "unit";
    rec.step = 7;
    const std::string text = serialize(rec);
    const SolutionRecord back = parse(text);
    CHECK(serialize(back) == text);
    CHECK(back.kind == "periodic-orbit");
    CHECK(back.step == 7);
    CHECK(back.parent_run == "unit");
    CHECK(back.solution.mesh().nodes == o.solution.mesh().nodes);
    CHECK((back.solution.values().array() == o.solution.values().array()).all());
    CHECK((back.solution.scalars().values.array() == o.solution.scalars().values.array()).all());

    const fs::path path = scratch("orbit.sol");
    save(rec, path);
    CHECK(read_file(path) == text);
    CHECK(serialize(load(path)) == text);
}

TEST_CASE("reloaded orbit re-solves within two iterations") {
    const fs::path path = scratch("reload.sol");
    save(to_record(fixtures::lyapunov_orbit(), fixtures::mu()), path);
    const PeriodicOrbit o = orbit_from(load(path));
    const NewtonResult r = reconverge_orbit(PeriodicOrbitProblem(fixtures::mu()), o.solution);
    CHECK(r.iterations <= 2);
    CHECK(o.energy == doctest::Approx(fixtures::kLyapunovEnergy).epsilon(1e-9));
    CHECK(o.multipliers.size() == 6);
}

TEST_CASE("packet and manifold records round-trip with their metadata") {
    const EigenPacket& p = fixtures::lyapunov_growth().packet;
    const EigenPacket p2 = packet_from(parse(serialize(to_record(p, fixtures::mu()))));
    CHECK(p2.sign == p.sign);
    CHECK(p2.lambda() == p.lambda());
    CHECK((p2.solution.values().array() == p.solution.values().array()).all());

    const ManifoldOrbit& m = fixtures::lyapunov_manifold();
    const std::string text = serialize(to_record(m, fixtures::mu()));
    const ManifoldOrbit m2 = manifold_from(parse(text));
    CHECK(serialize(to_record(m2, fixtures::mu())) == text);
    CHECK(m2.section.index == m.section.index);
    CHECK(m2.section.value == m.section.value);
    CHECK(m2.lambda == m.lambda);
    CHECK((m2.u0.array() == m.u0.array()).all());
    CHECK((m2.v0.array() == m.v0.array()).all());
    CHECK(m2.start_defect() == m.start_defect());
}

TEST_CASE("corrupted or foreign files are refused") {
    const std::string text = serialize(to_record(fixtures::lyapunov_orbit(), fixtures::mu()));
    CHECK_THROWS_AS(parse(replace_line(text, "schema:", "schema: 99")), IoError);
    // flip one digit in the body
    std::string tampered = text;
    const auto pos = tampered.find("body");
    const auto digit = tampered.find_first_of("123456789", pos + 10);
    tampered[digit] = tampered[digit] == '9' ? '8' : tampered[digit] + 1;
    CHECK_THROWS_AS(parse(tampered), IoError);
    CHECK_THROWS_AS(parse("not a solution file\n"), IoError);
    CHECK_THROWS_AS(load(scratch("missing.sol")), IoError);
    // a record of the wrong kind
    CHECK_THROWS_AS(packet_from(parse(text)), IoError);
}

TEST_CASE("config parsing is strict") {
    const RunConfig c = parse_config(R"({"schema": 1, "mu": 0.01215, "pair": "vertical", "intervals": 20,
                                        "section": {"index": 0, "value": 0.5, "crossing": 2}})");
    CHECK(c.pair == "vertical");
    CHECK(c.intervals == 20);
    CHECK(c.section.crossing == 2);
    CHECK_THROWS_AS(parse_config(R"({"intervalz": 20})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"section": {"idx": 1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema": 2})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"pair": "diagonal"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"intervals": 2})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"intervals": "many"})"), ConfigError);
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"inputs": {"orbitt": "x.sol"}})"), ConfigError);
}

TEST_CASE("config dump round-trips") {
    RunConfig c = v1_timing_config();
    c.target_energies = {-1.5164};
    c.inputs["orbit"] = "a.sol";
    const RunConfig back = parse_config(dump_config(c));
    CHECK(dump_config(back) == dump_config(c));
    CHECK(back.intervals == 20);
    CHECK(back.degree == 4);
    CHECK(back.max_steps == 48);
    CHECK(back.pair == "vertical");
    CHECK(back.inputs.at("orbit") == "a.sol");
}

TEST_CASE("csv tables read back") {
    const std::string text = family_csv(fixtures::lyapunov_family(), fixtures::mu());
    const CsvTable t = parse_csv(text);
    CHECK(t.header.front() == "step");
    CHECK(t.rows.size() == fixtures::lyapunov_family().orbits.size());
    const int e = t.column("E");
    CHECK(parse_double(t.rows.back().at(e)) == fixtures::lyapunov_family().orbits.back().energy);
    CHECK_THROWS_AS(t.column("nope"), IoError);
}

TEST_CASE("svg projections are well formed") {
    const std::string svg = projection_svg(fixtures::lyapunov_growth().packet.solution, 0, 1);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    // orbit block only: the eigenfunction block is skipped
    std::size_t lines = 0;
    for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
    CHECK(lines == 1);
    const std::string d = diagram_svg({0, 1, 2}, {1, 0, 1}, "E", "T");
    CHECK(d.find("<polyline") != std::string::npos);
}
