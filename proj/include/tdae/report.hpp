#pragma once

#include <string>

#include "tdae/harness.hpp"
#include "tdae/immunize.hpp"

namespace tdae::report {

/// Version of the JSON/CSV layouts below; bumped on any incompatible change.
inline constexpr int kReportSchemaVersion = 1;

struct Options {
    /// Wall-time fields (keys/columns containing "seconds", plus "time_ratio"). Everything else is
    /// a pure function of the config and seed.
    bool include_timing = true;
};

std::string to_json(const harness::TransferReport& r, const harness::ExperimentPlan& plan, const Options& opt = {});
std::string to_csv(const harness::TransferReport& r, const Options& opt = {});

std::string to_json(const harness::ImperceptibilityReport& r, const harness::ExperimentPlan& plan,
                    const Options& opt = {});
std::string to_csv(const harness::ImperceptibilityReport& r, const Options& opt = {});

std::string to_json(const harness::FlatnessReport& r, const harness::ExperimentPlan& plan, const Options& opt = {});
std::string to_csv(const harness::FlatnessReport& r, const Options& opt = {});

std::string to_json(const harness::AblationReport& r, const harness::ExperimentPlan& plan, const Options& opt = {});
std::string to_csv(const harness::AblationReport& r, const Options& opt = {});

std::string to_json(const harness::EfficiencyReport& r, const harness::ExperimentPlan& plan, const Options& opt = {});
std::string to_csv(const harness::EfficiencyReport& r, const Options& opt = {});

struct SidecarInfo {
    std::string method;
    std::string model;
    std::string architecture;
    long long budget_steps = 0;
    long long exported_max_steps = 0;
};

/// Trajectory summary written next to an immunized image.
std::string sidecar_json(const immunize::ImmunizationResult& result, const harness::ExperimentPlan& plan,
                         const SidecarInfo& info, const Options& opt = {});

/// Shortest round-trip decimal; "inf"/"-inf" for infinities, "" for an empty optional.
std::string csv_number(double v);

}  // namespace tdae::report
