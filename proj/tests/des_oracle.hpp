#pragma once

// Brute-force re-simulation used as an independent oracle for the
// discrete-event environment. It replays a fixed incident schedule and
// action list over flat arrays, one minute at a time, applying the
// contract rules directly: advance positions, resolve dispatch-point /
// hospital / scene arrivals, materialise due incidents, then assign the
// closest free ambulance to the head of the FIFO queue. Written separately
// from the production state machine on purpose.

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

namespace desoracle {

struct Pos {
    double x = 0.0;
    double y = 0.0;
};

inline double dist(const Pos& a, const Pos& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

struct Amb {
    Pos pos;
    // 0 idle-at-dp, 1 to-dp, 2 to-incident, 3 conveying/queued, 4 awaiting
    int state = 0;
    int dp = -1;       // dispatch point it counts toward (-1 none)
    int incident = -1; // incident it is serving
    Pos origin, dest;
    double total = 0.0, done = 0.0;
    bool leg = false;
};

struct Inc {
    double call = 0.0;
    Pos pos;
    int amb = -1;
    double assign = -1.0;
    double arrival = -1.0;
};

struct Return {
    double clock = 0.0;
    double reward = 0.0;
    bool terminal = false;
    int incident = -1; // -1 for a terminal return without a completion
    std::vector<double> counts; // per-dispatch-point allocation counts
    Pos awaiting_pos;
    bool has_awaiting = false;
};

struct Oracle {
    double world = 50.0;
    double speed_per_min = 1.0;
    bool divert = false;
    double end_min = 1440.0;
    std::vector<Pos> dps;
    std::vector<Pos> hospitals;
    std::vector<Amb> ambs;
    std::vector<Inc> incidents; // the full schedule, sorted by call time
    std::size_t next_incident = 0;
    std::deque<int> pending;
    std::deque<int> completed; // conveyances waiting to be presented
    double clock = 0.0;
    int awaiting = -1; // ambulance waiting for an allocation

    void start_leg(Amb& a, const Pos& to) {
        a.origin = a.pos;
        a.dest = to;
        a.total = dist(a.pos, to);
        a.done = 0.0;
        a.leg = true;
    }

    int closest_hospital(const Pos& from) const {
        int best = 0;
        double best_d = dist(hospitals[0], from);
        for (std::size_t h = 1; h < hospitals.size(); ++h) {
            const double d = dist(hospitals[h], from);
            if (d < best_d) {
                best = static_cast<int>(h);
                best_d = d;
            }
        }
        return best;
    }

    int closest_free(const Pos& from) const {
        int best = -1;
        double best_d = 0.0;
        for (std::size_t i = 0; i < ambs.size(); ++i) {
            const Amb& a = ambs[i];
            const bool free = a.state == 0 || (divert && a.state == 1);
            if (!free)
                continue;
            const double d = dist(a.pos, from);
            if (best < 0 || d < best_d) {
                best = static_cast<int>(i);
                best_d = d;
            }
        }
        return best;
    }

    void minute() {
        clock += 1.0;
        for (Amb& a : ambs) {
            if (!a.leg)
                continue;
            a.done = std::min(a.total, a.done + speed_per_min);
            if (a.total > 0.0) {
                const double f = a.done / a.total;
                a.pos = {a.origin.x + f * (a.dest.x - a.origin.x),
                         a.origin.y + f * (a.dest.y - a.origin.y)};
            } else {
                a.pos = a.dest;
            }
        }
        for (Amb& a : ambs)
            if (a.state == 1 && a.leg && a.done >= a.total) {
                a.pos = a.dest;
                a.leg = false;
                a.state = 0;
            }
        for (std::size_t i = 0; i < ambs.size(); ++i) {
            Amb& a = ambs[i];
            if (a.state == 3 && a.leg && a.done >= a.total) {
                a.pos = a.dest;
                a.leg = false;
                completed.push_back(a.incident);
            }
        }
        for (Amb& a : ambs)
            if (a.state == 2 && a.leg && a.done >= a.total) {
                a.pos = a.dest;
                Inc& inc = incidents[a.incident];
                inc.arrival = clock;
                start_leg(a, hospitals[closest_hospital(a.pos)]);
                a.state = 3;
            }
        while (next_incident < incidents.size() &&
               incidents[next_incident].call <= clock) {
            pending.push_back(static_cast<int>(next_incident));
            ++next_incident;
        }
        while (!pending.empty()) {
            Inc& inc = incidents[pending.front()];
            const int who = closest_free(inc.pos);
            if (who < 0)
                break;
            Amb& a = ambs[who];
            inc.amb = who;
            inc.assign = clock;
            a.incident = pending.front();
            a.dp = -1;
            a.state = 2;
            start_leg(a, inc.pos);
            pending.pop_front();
        }
    }

    Return snapshot(int completed_incident) const {
        Return r;
        r.clock = clock;
        r.terminal = clock >= end_min;
        r.incident = completed_incident;
        if (completed_incident >= 0) {
            const Inc& inc = incidents[completed_incident];
            const double c2a = inc.arrival - inc.call;
            r.reward = -(c2a * c2a);
        }
        r.counts.assign(dps.size(), 0.0);
        for (const Amb& a : ambs)
            if (a.dp >= 0 && (a.state == 0 || a.state == 1))
                r.counts[a.dp] += 1.0;
        if (awaiting >= 0) {
            r.awaiting_pos = ambs[awaiting].pos;
            r.has_awaiting = true;
        }
        return r;
    }

    Return present() {
        const int id = completed.front();
        completed.pop_front();
        Amb& a = ambs[incidents[id].amb];
        a.state = 4;
        a.incident = -1;
        awaiting = incidents[id].amb;
        return snapshot(id);
    }

    /// Replays one agent step: allocate the awaiting ambulance, then run
    /// minutes until a conveyance completes or the episode ends.
    Return step(int action) {
        Amb& a = ambs[awaiting];
        a.dp = action;
        a.state = 1;
        start_leg(a, dps[action]);
        awaiting = -1;
        if (!completed.empty())
            return present();
        while (true) {
            minute();
            if (!completed.empty())
                return present();
            if (clock >= end_min)
                return snapshot(-1);
        }
    }
};

} // namespace desoracle
