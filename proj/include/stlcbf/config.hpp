#pragma once

#include "stlcbf/contract.hpp"
#include "stlcbf/qp.hpp"
#include "stlcbf/stl.hpp"
#include "stlcbf/vehicle.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace stlcbf {

/// Parse errors and invariant violations; lists every offending field.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct Tolerances {
    double monitor = kMonitorTolerance;
    double initial_set = kSetTolerance;
    int grid_points = 101;
    double step_margin = 0.01;
    double gamma_min = kDefaultGammaMin;
};

struct FcbfDefaults {
    double rho_signal = 0.9;
    double rho_speed = 0.91;
    double t_conv_speed = 5.0;
    std::optional<double> gamma_speed;
};

struct LeadConfig {
    double v0 = 0.0;
    std::vector<std::pair<double, double>> accel_steps;
};

/// User-declared barrier over (X_f, V_f, X_l).
struct BarrierDecl {
    std::string id;
    /// "affine" or "constant"
    std::string kind;
    Eigen::VectorXd coeffs;
    std::vector<double> switch_times;
    std::vector<double> offsets;
    double alpha = 1.0;
    ConvergenceSettings convergence;
};

struct ScenarioConfig {
    std::string name;
    std::filesystem::path base_dir;

    vehicle::VehicleParams vehicle;
    InputBox input_box;
    Box domain;
    State x0;
    LeadConfig lead;
    std::optional<vehicle::SpeedLimitSchedule> speed_limits;
    /// Explicit signals or generator settings (drawn with `seed`).
    std::variant<std::monostate, std::vector<vehicle::TrafficSignal>, vehicle::SignalGeneratorSettings> signals;
    std::vector<BarrierDecl> barriers;
    FcbfDefaults fcbf;
    PidGains pid;
    Tolerances tolerances;
    std::string spec_text;

    double dt = 0.01;
    double horizon = 0.0;
    std::uint64_t seed = 0;

    /// Canonical serialization of the loaded document, used for hashing.
    std::string canonical;
};

/// Reads a JSON scenario; relative spec_file paths resolve against its directory.
ScenarioConfig load_config(const std::filesystem::path& path);
ScenarioConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});

/// Ids registered automatically: h1, h_v, v1..vN (one per limit interval),
/// h_pos (when signals exist).
std::string default_spec(const ScenarioConfig& cfg);

}  // namespace stlcbf
