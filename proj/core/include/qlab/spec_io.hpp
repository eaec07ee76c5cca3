#pragma once

// JSON form of a CircuitSpec:
//
//   {
//     "modes": [{"label": "x", "component": 1, "scale": 0, "nu": 0.0, "seeded": false}, ...],
//     "terms": [{"out": "x", "in1": "x", "in2": "y", "coeff": -1.0}, ...]
//   }
//
// Terms name modes by label, so labels must be unique. "nu" and "seeded"
// are optional. Doubles are written with round-trip precision.

#include <string>

#include "qlab/circuit.hpp"

namespace qlab {

std::string spec_to_json(const CircuitSpec& spec);

// Throws InvalidInput on malformed documents or unknown labels.
CircuitSpec spec_from_json(const std::string& text);
CircuitSpec load_spec(const std::string& path);

std::string cancellation_report_json(const CancellationReport& report, double numeric_residual);

}  // namespace qlab
