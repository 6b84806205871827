#pragma once

// Minute-resolution discrete-event simulation of emergency incidents,
// ambulances, hospitals and dispatch points. The agent-facing surface is
// gym-like: reset() returns the first observation, step(action) allocates
// the waiting ambulance to a dispatch point and advances the simulation
// until another ambulance needs an allocation (or the episode ends).

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dispatchrl/geometry.hpp"

namespace dispatchrl {

using Observation = std::vector<double>;

/// Full parameterisation of the simulated world.
struct SimConfig {
    double world_size_km = 50.0;
    int n_dispatch_points = 25; // must be a perfect square (grid placement)
    int n_hospitals = 1;
    int n_ambulances = 3;
    int n_incident_areas = 1;   // active incident centres at any time of day
    int n_epochs_per_day = 2;   // daily incident-pattern changes
    double incidents_per_ambulance_per_day = 8.0;
    double incident_jitter_km = 2.0;
    double ambulance_speed_kph = 60.0;
    bool allocate_while_travelling = false;
    int episode_duration_days = 365;
    std::uint64_t random_seed = 42;

    /// Combined incident rate per simulated minute.
    double incident_rate_per_min() const {
        return n_ambulances * incidents_per_ambulance_per_day / 1440.0;
    }
    double episode_duration_min() const { return episode_duration_days * 1440.0; }

    /// Throws std::invalid_argument on any violated invariant.
    void validate() const;
};

enum class AmbulanceStatus {
    AtDispatchPoint,
    TravellingToDispatchPoint,
    TravellingToIncident,
    ConveyingToHospital, // at scene / carrying patient; pickup is instantaneous
    AwaitingAllocation,
};

const char* to_string(AmbulanceStatus s);

struct Ambulance {
    int id = 0;
    AmbulanceStatus status = AmbulanceStatus::AtDispatchPoint;
    Point position;
    std::optional<int> assigned_dispatch_point;
    std::optional<int> assigned_incident;

    // Current straight-line leg. Position is interpolated between origin and
    // destination by travelled/total distance.
    Point travel_origin;
    Point travel_destination;
    double travel_total_km = 0.0;
    double travel_done_km = 0.0;
    bool leg_active = false;
};

struct Incident {
    int id = 0;
    double call_time_min = 0.0;
    Point location;
    std::optional<int> assigned_ambulance;
    std::optional<double> assign_time_min;
    std::optional<double> arrival_time_min;
};

/// Episode counters returned with every step.
struct StepInfo {
    std::vector<double> call_to_arrival_times;       // minutes, one per arrival so far
    std::vector<double> assignment_to_arrival_times; // minutes
    long total_calls = 0;
    double fraction_demand_met = 1.0;
};

struct StepResult {
    Observation observation;
    double reward = 0.0; // -(call-to-arrival)^2 for the conveyance that ended
                         // this step, 0 if none
    bool terminal = false;
    bool truncated = false; // terminal caused by the episode time limit
    StepInfo info;
};

/// Pre-planned incident stream used by tests in place of the stochastic one.
struct ScheduledIncident {
    double call_time_min = 0.0;
    Point location;
};

/// Inter-arrival time draw, exponentially distributed.
double sample_next_incident(std::mt19937_64& rng, double rate_per_min);

/// Centre plus independent uniform jitter on each axis, clamped to the world.
Point incident_location(std::mt19937_64& rng, const Point& centre, double jitter_km,
                        double world_size_km);

/// Index of the incident-pattern epoch active at the given clock time.
int active_epoch(double clock_min, int n_epochs_per_day);

/// Abstract reset/step surface so harness code can run against stub worlds.
class EnvBase {
public:
    virtual ~EnvBase() = default;
    virtual Observation reset(std::uint64_t run_seed) = 0;
    virtual StepResult step(int action) = 0;
    virtual int action_count() const = 0;
    virtual int observation_size() const = 0;
};

class Environment final : public EnvBase {
public:
    /// Lays out dispatch points, hospitals and per-epoch incident centres.
    /// The layout is drawn once from config.random_seed and never redrawn
    /// on reset.
    explicit Environment(const SimConfig& config);

    Observation reset(std::uint64_t run_seed) override;

    /// Reset with a fixed incident schedule instead of the stochastic
    /// stream. The schedule must be sorted by call time. run_seed still
    /// controls the random ambulance placement.
    Observation reset_with_schedule(std::uint64_t run_seed,
                                    std::vector<ScheduledIncident> schedule);

    StepResult step(int action) override;

    int action_count() const override { return config_.n_dispatch_points; }
    int observation_size() const override { return config_.n_dispatch_points + 3; }

    /// Human-readable state snapshot; does not mutate the simulation.
    std::string render() const;

    /// One CSV row per incident whose ambulance reached the scene.
    void write_episode_log(std::ostream& out) const;

    // Read-only state access (used by the render dump, tests and oracles).
    const SimConfig& config() const { return config_; }
    double clock_min() const { return clock_min_; }
    bool terminal() const { return clock_min_ >= config_.episode_duration_min(); }
    const std::vector<Point>& dispatch_points() const { return dispatch_points_; }
    const std::vector<Point>& hospitals() const { return hospitals_; }
    /// Incident centres indexed [epoch][area].
    const std::vector<std::vector<Point>>& incident_centres() const {
        return incident_centres_;
    }
    const std::vector<Ambulance>& ambulances() const { return ambulances_; }
    const std::deque<int>& pending_incidents() const { return pending_; }
    const std::vector<Incident>& incidents() const { return incidents_; }

private:
    void tick();
    StepResult present_next_completion();
    void advance_travel(Ambulance& amb);
    void resolve_arrivals();
    void materialise_incidents();
    void assignment_sweep();
    void assign_ambulance_to_dispatch_point(Ambulance& amb, int dp_index);
    void begin_travel(Ambulance& amb, const Point& destination);
    int closest_free_ambulance(const Point& where) const;
    int closest_hospital(const Point& where) const;
    Observation make_observation(std::optional<int> awaiting_id) const;
    StepResult make_step_result(std::optional<int> completed_incident_id,
                                std::optional<int> awaiting_id) const;
    StepInfo make_info() const;
    double time_of_day_fraction() const;

    SimConfig config_;
    std::vector<Point> dispatch_points_;
    std::vector<Point> hospitals_;
    std::vector<std::vector<Point>> incident_centres_; // [epoch][area]

    // Per-episode state.
    std::mt19937_64 run_rng_;
    double clock_min_ = 0.0;
    std::vector<Ambulance> ambulances_;
    std::vector<Incident> incidents_;
    std::deque<int> pending_;         // unassigned incident ids, FIFO by call time
    std::deque<int> completion_queue_; // incident ids whose conveyance finished
    long arrived_count_ = 0;
    double next_call_time_min_ = 0.0;
    bool stochastic_incidents_ = true;
    std::vector<ScheduledIncident> schedule_;
    std::size_t schedule_cursor_ = 0;
    bool episode_active_ = false;
    std::optional<int> awaiting_ambulance_;
};

} // namespace dispatchrl
