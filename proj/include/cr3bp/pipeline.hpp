#pragma once

// Pipeline stages shared by the command-line driver and the acceptance run:
// libration point -> family (optionally switched at a branch point) -> eigenfunction packet.

#include <optional>
#include <string>

#include "cr3bp/floquet.hpp"
#include "cr3bp/io.hpp"
#include "cr3bp/orbits.hpp"

namespace cr3bp::io {

struct FamilyRun {
    FamilyResult primary;
    std::optional<FamilyResult> secondary;   // present when the config switches at a branch point
    std::string primary_tag;
    std::string secondary_tag;
    const FamilyResult& final_family() const { return secondary ? *secondary : primary; }
};

/// Family from the configured libration point and eigenpair. Targets apply to the final family;
/// the primary family is run without targets when switching.
FamilyRun run_family(const RunConfig& c);

struct PacketRun {
    GrowthReport growth;
    std::optional<PacketFamily> family;      // present when a packet energy or period target is set
    EigenPacket packet;                      // the growth packet, or the refined target member
};

/// Eigenfunction growth on `orbit`; the seed defaults to the largest real exponent.
/// With a packet energy or period target the packet is continued there.
PacketRun run_eigenfunction(const RunConfig& c, const PeriodicOrbit& orbit);

}  // namespace cr3bp::io
