#include "dispatchrl/environment.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dispatchrl {

namespace {

int integer_sqrt(int n) {
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : -1;
}

} // namespace

void SimConfig::validate() const {
    if (world_size_km <= 0.0)
        throw std::invalid_argument("world_size_km must be positive");
    if (n_dispatch_points < 1 || n_hospitals < 1 || n_ambulances < 1 ||
        n_incident_areas < 1 || n_epochs_per_day < 1)
        throw std::invalid_argument("all entity counts must be at least 1");
    if (incidents_per_ambulance_per_day <= 0.0)
        throw std::invalid_argument("incidents_per_ambulance_per_day must be positive");
    if (incident_jitter_km < 0.0)
        throw std::invalid_argument("incident_jitter_km must be non-negative");
    if (ambulance_speed_kph <= 0.0)
        throw std::invalid_argument("ambulance_speed_kph must be positive");
    if (episode_duration_days < 1)
        throw std::invalid_argument("episode_duration_days must be at least 1");
    if (integer_sqrt(n_dispatch_points) < 0)
        throw std::invalid_argument(
            "n_dispatch_points must be a perfect square for even-grid placement");
}

const char* to_string(AmbulanceStatus s) {
    switch (s) {
    case AmbulanceStatus::AtDispatchPoint: return "AtDispatchPoint";
    case AmbulanceStatus::TravellingToDispatchPoint: return "TravellingToDispatchPoint";
    case AmbulanceStatus::TravellingToIncident: return "TravellingToIncident";
    case AmbulanceStatus::ConveyingToHospital: return "ConveyingToHospital";
    case AmbulanceStatus::AwaitingAllocation: return "AwaitingAllocation";
    }
    return "?";
}

double sample_next_incident(std::mt19937_64& rng, double rate_per_min) {
    if (rate_per_min <= 0.0)
        throw std::invalid_argument("incident rate must be positive");
    return std::exponential_distribution<double>(rate_per_min)(rng);
}

Point incident_location(std::mt19937_64& rng, const Point& centre, double jitter_km,
                        double world_size_km) {
    if (jitter_km == 0.0)
        return clamp_to_world(centre, world_size_km);
    std::uniform_real_distribution<double> offset(-jitter_km, jitter_km);
    const double dx = offset(rng);
    const double dy = offset(rng);
    return clamp_to_world({centre.x + dx, centre.y + dy}, world_size_km);
}

int active_epoch(double clock_min, int n_epochs_per_day) {
    const double minute_of_day = std::fmod(clock_min, 1440.0);
    const double epoch_len = 1440.0 / n_epochs_per_day;
    const int epoch = static_cast<int>(minute_of_day / epoch_len);
    return std::clamp(epoch, 0, n_epochs_per_day - 1);
}

Environment::Environment(const SimConfig& config) : config_(config) {
    config_.validate();

    const int grid = integer_sqrt(config_.n_dispatch_points);
    const double spacing = config_.world_size_km / grid;
    dispatch_points_.reserve(config_.n_dispatch_points);
    for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j)
            dispatch_points_.push_back({(i + 0.5) * spacing, (j + 0.5) * spacing});

    std::mt19937_64 layout_rng(config_.random_seed);
    std::uniform_real_distribution<double> coord(0.0, config_.world_size_km);

    if (config_.n_hospitals == 1) {
        hospitals_.push_back({config_.world_size_km / 2.0, config_.world_size_km / 2.0});
    } else {
        for (int h = 0; h < config_.n_hospitals; ++h)
            hospitals_.push_back({coord(layout_rng), coord(layout_rng)});
    }

    incident_centres_.resize(config_.n_epochs_per_day);
    for (auto& epoch_centres : incident_centres_)
        for (int a = 0; a < config_.n_incident_areas; ++a)
            epoch_centres.push_back({coord(layout_rng), coord(layout_rng)});
}

Observation Environment::reset(std::uint64_t run_seed) {
    stochastic_incidents_ = true;
    schedule_.clear();
    Observation obs = reset_with_schedule(run_seed, {});
    stochastic_incidents_ = true;
    next_call_time_min_ = sample_next_incident(run_rng_, config_.incident_rate_per_min());
    return obs;
}

Observation Environment::reset_with_schedule(std::uint64_t run_seed,
                                             std::vector<ScheduledIncident> schedule) {
    run_rng_.seed(run_seed);
    clock_min_ = 0.0;
    incidents_.clear();
    pending_.clear();
    completion_queue_.clear();
    arrived_count_ = 0;
    stochastic_incidents_ = false;
    schedule_ = std::move(schedule);
    schedule_cursor_ = 0;
    episode_active_ = true;

    ambulances_.clear();
    ambulances_.resize(config_.n_ambulances);
    std::uniform_int_distribution<int> pick_dp(0, config_.n_dispatch_points - 1);
    for (int i = 0; i < config_.n_ambulances; ++i) {
        Ambulance& amb = ambulances_[i];
        amb.id = i;
        const int dp = pick_dp(run_rng_);
        amb.status = AmbulanceStatus::AtDispatchPoint;
        amb.position = dispatch_points_[dp];
        amb.assigned_dispatch_point = dp;
    }
    // One ambulance starts ready for re-allocation so the step cycle can begin.
    ambulances_[0].status = AmbulanceStatus::AwaitingAllocation;
    ambulances_[0].assigned_dispatch_point.reset();
    awaiting_ambulance_ = 0;

    return make_observation(awaiting_ambulance_);
}

StepResult Environment::step(int action) {
    if (!episode_active_)
        throw std::logic_error("step() called before reset()");
    if (terminal())
        throw std::logic_error("step() called on a finished episode");
    if (!awaiting_ambulance_)
        throw std::logic_error("step() called with no ambulance awaiting allocation");
    if (action < 0 || action >= config_.n_dispatch_points)
        throw std::out_of_range("dispatch point index out of range");

    Ambulance& allocated = ambulances_[*awaiting_ambulance_];
    assign_ambulance_to_dispatch_point(allocated, action);
    awaiting_ambulance_.reset();

    // Conveyances that finished in an earlier minute are handed to the agent
    // one per step, without advancing the clock.
    if (!completion_queue_.empty())
        return present_next_completion();

    while (true) {
        tick();
        if (!completion_queue_.empty())
            return present_next_completion();
        if (terminal())
            return make_step_result(std::nullopt, std::nullopt);
    }
}

StepResult Environment::present_next_completion() {
    const int incident_id = completion_queue_.front();
    completion_queue_.pop_front();
    Ambulance& amb = ambulances_[*incidents_[incident_id].assigned_ambulance];
    amb.status = AmbulanceStatus::AwaitingAllocation;
    amb.assigned_incident.reset();
    awaiting_ambulance_ = amb.id;
    return make_step_result(incident_id, awaiting_ambulance_);
}

void Environment::tick() {
    clock_min_ += 1.0;
    for (Ambulance& amb : ambulances_)
        advance_travel(amb);
    resolve_arrivals();
    materialise_incidents();
    assignment_sweep();
}

void Environment::advance_travel(Ambulance& amb) {
    if (!amb.leg_active)
        return;
    const double per_min = config_.ambulance_speed_kph / 60.0;
    amb.travel_done_km = std::min(amb.travel_total_km, amb.travel_done_km + per_min);
    if (amb.travel_total_km > 0.0) {
        const double f = amb.travel_done_km / amb.travel_total_km;
        amb.position = {amb.travel_origin.x + f * (amb.travel_destination.x - amb.travel_origin.x),
                        amb.travel_origin.y + f * (amb.travel_destination.y - amb.travel_origin.y)};
    } else {
        amb.position = amb.travel_destination;
    }
}

void Environment::resolve_arrivals() {
    auto leg_finished = [](const Ambulance& amb) {
        return amb.leg_active && amb.travel_done_km >= amb.travel_total_km;
    };
    for (Ambulance& amb : ambulances_) {
        if (amb.status == AmbulanceStatus::TravellingToDispatchPoint && leg_finished(amb)) {
            amb.position = amb.travel_destination;
            amb.leg_active = false;
            amb.status = AmbulanceStatus::AtDispatchPoint;
        }
    }
    for (Ambulance& amb : ambulances_) {
        if (amb.status == AmbulanceStatus::ConveyingToHospital && leg_finished(amb)) {
            amb.position = amb.travel_destination;
            amb.leg_active = false;
            completion_queue_.push_back(*amb.assigned_incident);
        }
    }
    // Scene arrivals last: a conveyance leg begun here resolves no earlier
    // than the next minute, even when the scene is at the hospital itself.
    for (Ambulance& amb : ambulances_) {
        if (amb.status == AmbulanceStatus::TravellingToIncident && leg_finished(amb)) {
            amb.position = amb.travel_destination;
            Incident& incident = incidents_[*amb.assigned_incident];
            incident.arrival_time_min = clock_min_;
            ++arrived_count_;
            begin_travel(amb, hospitals_[closest_hospital(amb.position)]);
            amb.status = AmbulanceStatus::ConveyingToHospital;
        }
    }
}

void Environment::materialise_incidents() {
    if (stochastic_incidents_) {
        while (next_call_time_min_ <= clock_min_) {
            Incident incident;
            incident.id = static_cast<int>(incidents_.size());
            incident.call_time_min = next_call_time_min_;
            const int epoch = active_epoch(incident.call_time_min, config_.n_epochs_per_day);
            std::uniform_int_distribution<int> pick_area(0, config_.n_incident_areas - 1);
            const Point centre = incident_centres_[epoch][pick_area(run_rng_)];
            incident.location = incident_location(run_rng_, centre, config_.incident_jitter_km,
                                                  config_.world_size_km);
            incidents_.push_back(incident);
            pending_.push_back(incident.id);
            next_call_time_min_ +=
                sample_next_incident(run_rng_, config_.incident_rate_per_min());
        }
    } else {
        while (schedule_cursor_ < schedule_.size() &&
               schedule_[schedule_cursor_].call_time_min <= clock_min_) {
            Incident incident;
            incident.id = static_cast<int>(incidents_.size());
            incident.call_time_min = schedule_[schedule_cursor_].call_time_min;
            incident.location = schedule_[schedule_cursor_].location;
            incidents_.push_back(incident);
            pending_.push_back(incident.id);
            ++schedule_cursor_;
        }
    }
}

void Environment::assignment_sweep() {
    while (!pending_.empty()) {
        Incident& incident = incidents_[pending_.front()];
        const int amb_id = closest_free_ambulance(incident.location);
        if (amb_id < 0)
            break; // no free ambulance; later calls cannot be served either
        Ambulance& amb = ambulances_[amb_id];
        incident.assigned_ambulance = amb_id;
        incident.assign_time_min = clock_min_;
        amb.assigned_incident = incident.id;
        amb.assigned_dispatch_point.reset();
        amb.status = AmbulanceStatus::TravellingToIncident;
        begin_travel(amb, incident.location);
        pending_.pop_front();
    }
}

void Environment::assign_ambulance_to_dispatch_point(Ambulance& amb, int dp_index) {
    amb.assigned_dispatch_point = dp_index;
    amb.status = AmbulanceStatus::TravellingToDispatchPoint;
    begin_travel(amb, dispatch_points_[dp_index]);
}

void Environment::begin_travel(Ambulance& amb, const Point& destination) {
    amb.travel_origin = amb.position;
    amb.travel_destination = destination;
    amb.travel_total_km = distance(amb.position, destination);
    amb.travel_done_km = 0.0;
    amb.leg_active = true;
}

int Environment::closest_free_ambulance(const Point& where) const {
    int best = -1;
    double best_dist = 0.0;
    for (const Ambulance& amb : ambulances_) {
        const bool free =
            amb.status == AmbulanceStatus::AtDispatchPoint ||
            (config_.allocate_while_travelling &&
             amb.status == AmbulanceStatus::TravellingToDispatchPoint);
        if (!free)
            continue;
        const double d = distance(amb.position, where);
        if (best < 0 || d < best_dist) {
            best = amb.id;
            best_dist = d;
        }
    }
    return best;
}

int Environment::closest_hospital(const Point& where) const {
    int best = 0;
    double best_dist = distance(hospitals_[0], where);
    for (int h = 1; h < static_cast<int>(hospitals_.size()); ++h) {
        const double d = distance(hospitals_[h], where);
        if (d < best_dist) {
            best = h;
            best_dist = d;
        }
    }
    return best;
}

Observation Environment::make_observation(std::optional<int> awaiting_id) const {
    Observation obs(config_.n_dispatch_points + 3, 0.0);
    for (const Ambulance& amb : ambulances_) {
        if (!amb.assigned_dispatch_point)
            continue;
        if (amb.status == AmbulanceStatus::AtDispatchPoint ||
            amb.status == AmbulanceStatus::TravellingToDispatchPoint)
            obs[*amb.assigned_dispatch_point] += 1.0;
    }
    if (awaiting_id) {
        obs[config_.n_dispatch_points] = ambulances_[*awaiting_id].position.x;
        obs[config_.n_dispatch_points + 1] = ambulances_[*awaiting_id].position.y;
    }
    obs[config_.n_dispatch_points + 2] = time_of_day_fraction();
    return obs;
}

StepResult Environment::make_step_result(std::optional<int> completed_incident_id,
                                         std::optional<int> awaiting_id) const {
    StepResult result;
    result.observation = make_observation(awaiting_id);
    if (completed_incident_id) {
        const Incident& incident = incidents_[*completed_incident_id];
        const double call_to_arrival = *incident.arrival_time_min - incident.call_time_min;
        result.reward = -(call_to_arrival * call_to_arrival);
    }
    result.terminal = terminal();
    result.truncated = terminal();
    result.info = make_info();
    return result;
}

StepInfo Environment::make_info() const {
    StepInfo info;
    info.total_calls = static_cast<long>(incidents_.size());
    info.call_to_arrival_times.reserve(arrived_count_);
    info.assignment_to_arrival_times.reserve(arrived_count_);
    for (const Incident& incident : incidents_) {
        if (!incident.arrival_time_min)
            continue;
        info.call_to_arrival_times.push_back(*incident.arrival_time_min -
                                             incident.call_time_min);
        info.assignment_to_arrival_times.push_back(*incident.arrival_time_min -
                                                   *incident.assign_time_min);
    }
    info.fraction_demand_met =
        info.total_calls == 0
            ? 1.0
            : static_cast<double>(arrived_count_) / static_cast<double>(info.total_calls);
    return info;
}

double Environment::time_of_day_fraction() const {
    return std::fmod(clock_min_, 1440.0) / 1440.0;
}

std::string Environment::render() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "clock: " << clock_min_ << " min (day " << static_cast<long>(clock_min_ / 1440.0)
        << ", epoch " << active_epoch(clock_min_, config_.n_epochs_per_day) << ")\n";
    out << "ambulances:\n";
    for (const Ambulance& amb : ambulances_) {
        out << "  " << amb.id << " " << to_string(amb.status) << " (" << amb.position.x
            << ", " << amb.position.y << ")";
        if (amb.assigned_dispatch_point)
            out << " dp=" << *amb.assigned_dispatch_point;
        if (amb.assigned_incident)
            out << " incident=" << *amb.assigned_incident;
        out << "\n";
    }
    out << "pending: " << pending_.size() << "\n";
    out << "calls: " << incidents_.size() << " arrived: " << arrived_count_;
    if (!incidents_.empty())
        out << " fraction met: " << std::setprecision(3)
            << static_cast<double>(arrived_count_) / static_cast<double>(incidents_.size());
    out << "\n";
    return out.str();
}

void Environment::write_episode_log(std::ostream& out) const {
    out << "incident_id,call_time_min,assign_time_min,arrival_time_min,x_km,y_km,ambulance_id\n";
    std::ostringstream row;
    row << std::fixed << std::setprecision(3);
    for (const Incident& incident : incidents_) {
        if (!incident.arrival_time_min)
            continue;
        row.str("");
        row << incident.id << "," << incident.call_time_min << ","
            << *incident.assign_time_min << "," << *incident.arrival_time_min << ","
            << incident.location.x << "," << incident.location.y << ","
            << *incident.assigned_ambulance;
        out << row.str() << "\n";
    }
}

} // namespace dispatchrl
