#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autopent {

enum class PhaseName { reconnaissance, scanning, exploitation };

std::string_view to_string(PhaseName phase);
std::optional<PhaseName> parse_phase(std::string_view text);
/// Capitalised role name used in prompts ("Reconnaissance").
std::string display_name(PhaseName phase);

inline constexpr int kDefaultStepsPerPhase = 5;

struct PhaseSpec {
    PhaseName name = PhaseName::reconnaissance;
    std::string goal;
    std::vector<std::string> tools;
    int step_budget = kDefaultStepsPerPhase;
};

/// The three roles in execution order, each with the given budget.
std::vector<PhaseSpec> default_phases(int steps_per_phase = kDefaultStepsPerPhase);

} // namespace autopent
