#include "fitosim/sim_core.hpp"

#include <cmath>
#include <utility>

namespace fitosim
{
    std::string_view to_string(ModuleId id) noexcept
    {
        switch (id)
        {
        case ModuleId::Sim: return "sim";
        case ModuleId::Interconnect: return "interconnect";
        case ModuleId::Host: return "host";
        case ModuleId::Nic: return "nic";
        case ModuleId::Workload: return "workload";
        case ModuleId::Watchdog: return "watchdog";
        case ModuleId::Bilateral: return "bilateral";
        case ModuleId::Test: return "test";
        }
        return "unknown";
    }

    SimulationError::SimulationError(const SimEvent &ev, const std::string &what)
        : std::runtime_error("event #" + std::to_string(ev.sequence) + " (" + std::string(to_string(ev.target)) +
                             ") at t=" + std::to_string(ev.fire_at) + "ns failed: " + what),
          fire_at(ev.fire_at), sequence(ev.sequence), target(ev.target)
    {
    }

    EventHandle Engine::schedule(SimTime delay, ModuleId target, std::function<void()> payload)
    {
        return schedule_at(now_ + delay, target, std::move(payload));
    }

    EventHandle Engine::schedule_at(SimTime at, ModuleId target, std::function<void()> payload)
    {
        if (finished_)
            throw std::logic_error("schedule on a finished simulation");
        if (at < now_)
            throw std::logic_error("schedule into the past: at=" + std::to_string(at) + " now=" + std::to_string(now_));
        SimEvent ev{at, next_sequence_++, target, std::move(payload)};
        EventHandle handle{ev.sequence, ev.fire_at};
        queue_.push(std::move(ev));
        return handle;
    }

    std::uint64_t Engine::run_until(SimTime deadline)
    {
        if (deadline < now_)
            throw std::logic_error("run_until deadline before now()");
        std::uint64_t steps = 0;
        while (!queue_.empty() && !stop_requested_)
        {
            if (queue_.top().fire_at > deadline)
                break;
            // priority_queue::top is const; the event is moved out before pop.
            SimEvent ev = std::move(const_cast<SimEvent &>(queue_.top()));
            queue_.pop();
            now_ = ev.fire_at;
            ++dispatched_;
            ++steps;
            try
            {
                ev.payload();
            }
            catch (const SimulationError &)
            {
                throw;
            }
            catch (const std::exception &e)
            {
                throw SimulationError(ev, e.what());
            }
        }
        if (!stop_requested_)
            now_ = deadline;
        return steps;
    }

    std::uint64_t splitmix64(std::uint64_t &state) noexcept
    {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t fnv1a64(std::string_view text) noexcept
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : text)
        {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    Rng::Rng(std::uint64_t seed) noexcept : seed_(seed)
    {
        std::uint64_t st = seed;
        for (auto &word : s_)
            word = splitmix64(st);
    }

    Rng Rng::stream(std::uint64_t master_seed, std::string_view name) noexcept
    {
        std::uint64_t st = master_seed ^ fnv1a64(name);
        return Rng(splitmix64(st));
    }

    namespace
    {
        constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    } // namespace

    std::uint64_t Rng::next_u64() noexcept
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    std::uint64_t Rng::below(std::uint64_t bound) noexcept
    {
        // Lemire's multiply-shift with rejection.
        for (;;)
        {
            const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
            const auto low = static_cast<std::uint64_t>(m);
            if (low >= bound || low >= (-bound) % bound)
                return static_cast<std::uint64_t>(m >> 64);
        }
    }

    bool Rng::bernoulli(double p) noexcept { return uniform() < p; }

    SimTime Rng::exponential_ns(double mean_ns) noexcept
    {
        const double u = uniform();
        return static_cast<SimTime>(std::llround(-mean_ns * std::log1p(-u)));
    }
} // namespace fitosim
