#include "autopent/phase.hpp"

#include "autopent/errors.hpp"

namespace autopent {

std::string_view to_string(PhaseName phase) {
    switch (phase) {
    case PhaseName::reconnaissance: return "reconnaissance";
    case PhaseName::scanning: return "scanning";
    case PhaseName::exploitation: return "exploitation";
    }
    return "reconnaissance";
}

std::optional<PhaseName> parse_phase(std::string_view text) {
    if (text == "reconnaissance") return PhaseName::reconnaissance;
    if (text == "scanning") return PhaseName::scanning;
    if (text == "exploitation") return PhaseName::exploitation;
    return std::nullopt;
}

std::string display_name(PhaseName phase) {
    switch (phase) {
    case PhaseName::reconnaissance: return "Reconnaissance";
    case PhaseName::scanning: return "Scanning";
    case PhaseName::exploitation: return "Exploitation";
    }
    return "Reconnaissance";
}

std::vector<PhaseSpec> default_phases(int steps_per_phase) {
    if (steps_per_phase < 1) throw ConfigError("steps per phase must be at least 1");
    return {
        {PhaseName::reconnaissance,
         "Identify open ports, service banners, operating system fingerprints, and software "
         "versions on the target.",
         {"Nmap", "Dirb"},
         steps_per_phase},
        {PhaseName::scanning,
         "Identify exploitable vulnerabilities in the services and applications discovered "
         "during reconnaissance.",
         {"Nikto", "WPScan"},
         steps_per_phase},
        {PhaseName::exploitation,
         "Exploit the identified vulnerabilities to gain access to the target and escalate "
         "privileges.",
         {"Metasploit", "Hydra"},
         steps_per_phase},
    };
}

} // namespace autopent
