#include "cr3bp/errors.hpp"

#include <sstream>

namespace cr3bp {

NoConvergence::NoConvergence(int iterations_, double residual_norm_, const std::string& what)
    : Error([&] {
          std::ostringstream os;
          os << what << " (iterations=" << iterations_ << ", norm=" << residual_norm_ << ")";
          return os.str();
      }()),
      iterations(iterations_),
      residual_norm(residual_norm_) {}

SectionNotReached::SectionNotReached(double max_time_)
    : Error("section not reached before integration time " + std::to_string(max_time_)),
      max_time(max_time_) {}

}  // namespace cr3bp
