#include "carshare/sim.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace carshare {

long long NetworkState::total_particles() const {
    long long tot = in_transit;
    for (std::size_t i = 0; i < r.size(); ++i) tot += r[i] + v[i];
    return tot;
}

void NetworkState::validate(const ModelParams& p) const {
    if (r.size() != v.size()) throw std::invalid_argument("NetworkState: size mismatch");
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (r[i] < 0 || v[i] < 0) throw std::invalid_argument("NetworkState: negative count");
        switch (p.model) {
            case Model::ReservationInfinite:
                break;
            case Model::NoReservationFinite:
                if (r[i] != 0) throw std::invalid_argument("NetworkState: model 2 has no reservations");
                if (v[i] > *p.capacity) throw std::invalid_argument("NetworkState: v_i > K");
                break;
            case Model::ReservationFinite:
                if (r[i] + v[i] > *p.capacity)
                    throw std::invalid_argument("NetworkState: r_i + v_i > K");
                break;
        }
    }
    if (p.model != Model::NoReservationFinite && in_transit != 0)
        throw std::invalid_argument("NetworkState: in_transit only exists in model 2");
}

void SimConfig::validate(const ModelParams& p) const {
    if (n_stations <= 0) throw std::invalid_argument("SimConfig: n_stations must be > 0");
    if (fleet_size < 0) throw std::invalid_argument("SimConfig: fleet_size must be >= 0");
    if (replications < 1) throw std::invalid_argument("SimConfig: replications must be >= 1");
    if (p.capacity && fleet_size > (long long)*p.capacity * n_stations)
        throw std::invalid_argument("SimConfig: fleet exceeds total capacity K*N");
    for (double t : sample_times)
        if (t < 0.0 || t > horizon)
            throw std::invalid_argument("SimConfig: sample times must lie in [0, horizon]");
}

namespace {

// Stations grouped by their (r,v) class, walked in key order so that every
// random choice is a function of class counts alone. This makes trajectories
// of the empirical measure invariant under relabeling of stations.
class Engine {
  public:
    Engine(const NetworkState& s, const ModelParams& p) : p_(p), state_(s) {
        state_.validate(p);
        const int n = state_.n_stations();
        where_.resize(std::size_t(n));
        for (int i = 0; i < n; ++i) insert_station(i);
        for (int i = 0; i < n; ++i) {
            total_res_ += state_.r[std::size_t(i)];
            if (state_.v[std::size_t(i)] > 0) ++busy_;
        }
        expected_total_ = state_.total_particles();
    }

    const NetworkState& state() const { return state_; }
    void set_clock(double t) { state_.clock = t; }

    double total_rate() const {
        const double res_rate = p_.model == Model::NoReservationFinite
                                    ? p_.mu * double(state_.in_transit)
                                    : p_.mu * double(total_res_);
        return p_.lambda * double(busy_) + res_rate;
    }

    // Apply one event chosen by competing exponential clocks (the holding
    // time itself is drawn by the caller, who owns the clock).
    void apply_event(Rng& rng) {
        const double rate = total_rate();
        const double u = rng.uniform() * rate;
        if (u < p_.lambda * double(busy_))
            departure(rng);
        else if (p_.model == Model::NoReservationFinite)
            arrival(rng);
        else
            completion(rng);
    }

    void check_conservation() const {
        if (state_.total_particles() != expected_total_)
            throw std::runtime_error("simulation: particle conservation broken at t=" +
                                     std::to_string(state_.clock));
    }

  private:
    struct Bucket {
        std::vector<int> members;
    };
    static std::uint64_t key(int r, int v) { return (std::uint64_t(r) << 32) | std::uint64_t(v); }

    void insert_station(int i) {
        auto& b = buckets_[key(state_.r[std::size_t(i)], state_.v[std::size_t(i)])];
        where_[std::size_t(i)] = {&b, int(b.members.size())};
        b.members.push_back(i);
    }
    void remove_station(int i) {
        auto [b, pos] = where_[std::size_t(i)];
        const int last = b->members.back();
        b->members[std::size_t(pos)] = last;
        where_[std::size_t(last)].second = pos;
        b->members.pop_back();
    }
    void set_class(int i, int r_new, int v_new) {
        const int v_old = state_.v[std::size_t(i)];
        remove_station(i);
        total_res_ += r_new - state_.r[std::size_t(i)];
        if (v_old > 0 && v_new == 0) --busy_;
        if (v_old == 0 && v_new > 0) ++busy_;
        state_.r[std::size_t(i)] = r_new;
        state_.v[std::size_t(i)] = v_new;
        insert_station(i);
    }

    // Station holding at least one car, uniformly.
    int pick_busy(Rng& rng) {
        std::uint64_t u = rng.uniform_below(std::uint64_t(busy_));
        for (auto& [k, b] : buckets_) {
            if ((k & 0xffffffffULL) == 0 || b.members.empty()) continue;
            if (u < b.members.size()) return b.members[std::size_t(u)];
            u -= b.members.size();
        }
        throw std::logic_error("pick_busy: index walk failed");
    }
    // Uniform station (destination draw).
    int pick_any(Rng& rng) {
        std::uint64_t u = rng.uniform_below(std::uint64_t(state_.n_stations()));
        for (auto& [k, b] : buckets_) {
            if (b.members.empty()) continue;
            if (u < b.members.size()) return b.members[std::size_t(u)];
            u -= b.members.size();
        }
        throw std::logic_error("pick_any: index walk failed");
    }
    // Station chosen proportionally to its reservation count.
    int pick_by_reservations(Rng& rng) {
        std::uint64_t u = rng.uniform_below(std::uint64_t(total_res_));
        for (auto& [k, b] : buckets_) {
            const std::uint64_t r = k >> 32;
            if (r == 0 || b.members.empty()) continue;
            const std::uint64_t w = r * b.members.size();
            if (u < w) return b.members[std::size_t(u / r)];
            u -= w;
        }
        throw std::logic_error("pick_by_reservations: index walk failed");
    }

    void departure(Rng& rng) {
        const int i = pick_busy(rng);
        if (p_.model == Model::NoReservationFinite) {
            set_class(i, 0, state_.v[std::size_t(i)] - 1);
            ++state_.in_transit;
            return;
        }
        const int j = pick_any(rng);
        if (p_.model == Model::ReservationFinite &&
            state_.r[std::size_t(j)] + state_.v[std::size_t(j)] == *p_.capacity)
            return; // destination saturated: no departure occurs
        set_class(i, state_.r[std::size_t(i)], state_.v[std::size_t(i)] - 1);
        set_class(j, state_.r[std::size_t(j)] + 1, state_.v[std::size_t(j)]);
    }
    void completion(Rng& rng) {
        const int i = pick_by_reservations(rng);
        set_class(i, state_.r[std::size_t(i)] - 1, state_.v[std::size_t(i)] + 1);
    }
    void arrival(Rng& rng) { // model 2 return from transit
        const int j = pick_any(rng);
        if (state_.v[std::size_t(j)] == *p_.capacity) return; // full: car re-journeys
        --state_.in_transit;
        set_class(j, 0, state_.v[std::size_t(j)] + 1);
    }

    ModelParams p_;
    NetworkState state_;
    std::map<std::uint64_t, Bucket> buckets_;
    std::vector<std::pair<Bucket*, int>> where_;
    long long total_res_ = 0;
    long long busy_ = 0;
    long long expected_total_ = 0;
};

} // namespace

NetworkState initial_state(InitKind kind, const SimConfig& cfg, const ModelParams& p, Rng& rng) {
    cfg.validate(p);
    const int n = cfg.n_stations;
    const long long m = cfg.fleet_size;
    NetworkState s;
    s.r.assign(std::size_t(n), 0);
    s.v.assign(std::size_t(n), 0);

    auto place_random = [&](std::vector<int>& field, auto feasible) {
        for (long long placed = 0; placed < m; ++placed) {
            for (std::uint64_t tries = 0;; ++tries) {
                const int i = int(rng.uniform_below(std::uint64_t(n)));
                if (feasible(i)) {
                    ++field[std::size_t(i)];
                    break;
                }
                if (tries > std::uint64_t(n) * 1000ULL)
                    throw std::runtime_error("initial_state: placement infeasible");
            }
        }
    };

    switch (kind) {
        case InitKind::AllReserved:
            if (p.model == Model::NoReservationFinite)
                throw std::invalid_argument("initial_state: AllReserved invalid for model 2");
            place_random(s.r, [&](int i) { return !p.capacity || s.r[std::size_t(i)] < *p.capacity; });
            break;
        case InitKind::AllCars:
            place_random(s.v, [&](int i) { return !p.capacity || s.v[std::size_t(i)] < *p.capacity; });
            break;
        case InitKind::Uniform: {
            const long long q = m / n, rem = m % n;
            for (int i = 0; i < n; ++i) {
                const long long want = q + (i < rem ? 1 : 0);
                if (p.capacity && want > *p.capacity)
                    throw std::invalid_argument("initial_state: round-robin exceeds capacity");
                s.v[std::size_t(i)] = int(want);
            }
            break;
        }
    }
    s.validate(p);
    return s;
}

NetworkState step(const NetworkState& state, const ModelParams& p, Rng& rng) {
    Engine e(state, p);
    const double rate = e.total_rate();
    if (rate <= 0.0) throw std::runtime_error("step: no enabled event (absorbing state)");
    const double dt = rng.exponential(rate);
    e.apply_event(rng);
    e.set_clock(state.clock + dt);
    return e.state();
}

EmpiricalMeasure measure_state(const NetworkState& state, const ModelParams& p) {
    TruncationGrid g;
    if (p.capacity) {
        g = exact_grid(*p.capacity);
        if (p.model == Model::NoReservationFinite) g.joint_cap.reset(), g.j_max = 0;
    } else {
        g.j_max = *std::max_element(state.r.begin(), state.r.end());
        g.k_max = *std::max_element(state.v.begin(), state.v.end());
    }
    return measure_state_on(state, g);
}

EmpiricalMeasure measure_state_on(const NetworkState& state, const TruncationGrid& grid) {
    EmpiricalMeasure em;
    em.time = state.clock;
    em.counts = JointDist(grid);
    const double w = 1.0 / double(state.n_stations());
    for (int i = 0; i < state.n_stations(); ++i) {
        const int j = state.r[std::size_t(i)], k = state.v[std::size_t(i)];
        if (!grid.admits(j, k))
            throw std::runtime_error("measure_state_on: station state outside grid");
        em.counts(j, k) += w;
    }
    return em;
}

JointDist mean_measure(const std::vector<JointDist>& measures) {
    if (measures.empty()) throw std::invalid_argument("mean_measure: empty input");
    TruncationGrid g = measures.front().grid;
    for (const auto& m : measures) {
        g.j_max = std::max(g.j_max, m.grid.j_max);
        g.k_max = std::max(g.k_max, m.grid.k_max);
        if (!m.grid.joint_cap) g.joint_cap.reset();
    }
    JointDist acc(g);
    for (const auto& m : measures) acc.mass += m.embedded(g).mass;
    acc.mass /= double(measures.size());
    return acc;
}

namespace {

Replication run_one(const SimConfig& cfg, const ModelParams& p, InitKind init,
                    std::uint64_t rep_index) {
    Rng rng = Rng::stream(cfg.seed, rep_index);
    Engine engine(initial_state(init, cfg, p, rng), p);
    Replication rep;

    std::size_t next = 0;
    // The path is right-continuous and constant between events; sample times
    // strictly inside a holding interval see the pre-event state.
    auto record_strictly_before = [&](double t_next_event) {
        while (next < cfg.sample_times.size() && cfg.sample_times[next] < t_next_event) {
            EmpiricalMeasure em = measure_state(engine.state(), p);
            em.time = cfg.sample_times[next];
            rep.samples.push_back(std::move(em));
            ++next;
        }
    };

    double clock = engine.state().clock;
    while (next < cfg.sample_times.size()) {
        const double rate = engine.total_rate();
        if (rate <= 0.0) break; // absorbing state: remaining samples see it
        const double t_event = clock + rng.exponential(rate);
        record_strictly_before(std::min(t_event, cfg.horizon + 1.0));
        if (t_event > cfg.horizon || next >= cfg.sample_times.size()) break;
        engine.apply_event(rng);
        ++rep.events;
        clock = t_event;
        engine.set_clock(clock);
    }
    record_strictly_before(cfg.horizon + 1.0); // final state fills the rest
    engine.check_conservation();
    return rep;
}

} // namespace

std::vector<Replication> run(const SimConfig& cfg, const ModelParams& p, InitKind init,
                             int threads) {
    p.validate();
    cfg.validate(p);
    std::vector<Replication> out(std::size_t(cfg.replications));
    if (threads <= 1) {
        for (int rep = 0; rep < cfg.replications; ++rep)
            out[std::size_t(rep)] = run_one(cfg, p, init, std::uint64_t(rep));
        return out;
    }
    std::atomic<int> cursor{0};
    std::vector<std::thread> pool;
    const int nt = std::min(threads, cfg.replications);
    pool.reserve(std::size_t(nt));
    std::exception_ptr error;
    std::mutex error_mtx;
    for (int w = 0; w < nt; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const int rep = cursor.fetch_add(1);
                if (rep >= cfg.replications) return;
                try {
                    out[std::size_t(rep)] = run_one(cfg, p, init, std::uint64_t(rep));
                } catch (...) {
                    std::lock_guard lk(error_mtx);
                    if (!error) error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
    return out;
}

} // namespace carshare
