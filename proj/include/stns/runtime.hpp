#pragma once

/**
 * @file runtime.hpp
 * @brief Workers, message channels and the two-level space/time topology.
 *
 * N_p_total = N_p_time x N_p_space workers are launched as threads that share
 * nothing but reliable, ordered, tagged message channels. Worker (s, t) is
 * member s of spatial group t and member t of time group s; worker ids are
 * space-major, id = t * N_p_space + s.
 */

#include "stns/mesh.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <vector>

namespace stns {

struct WorkerCoord {
    int space_rank = 0;
    int time_rank = 0;

    bool operator==(const WorkerCoord&) const = default;
};

enum class GroupKind { Spatial, Time };

struct GroupInfo {
    GroupKind kind = GroupKind::Spatial;
    std::vector<int> members; // worker ids ordered by group rank
    int rank = 0;             // this worker's rank inside the group

    bool operator==(const GroupInfo&) const = default;
};

struct WorkerTopology {
    int id = 0;
    WorkerCoord coord;
    GroupInfo spatial;
    GroupInfo time;

    bool operator==(const WorkerTopology&) const = default;
};

int worker_id(WorkerCoord coord, int n_space) noexcept;

/// Pure function of the two counts; entry `id` describes worker `id`.
std::vector<WorkerTopology> build_topology(int n_space, int n_time);

/// Thrown out of blocking calls once any worker has failed.
class CommAborted : public std::runtime_error {
public:
    CommAborted() : std::runtime_error("communication aborted by a failing worker") {}
};

/// In-process mailboxes, one per worker.
class Transport {
public:
    explicit Transport(int workers);

    void send(int from, int to, int tag, std::vector<double> payload);
    std::vector<double> recv(int self, int from, int tag);

    void abort();
    bool aborted() const noexcept { return aborted_.load(); }

private:
    struct Message {
        int from;
        int tag;
        std::vector<double> payload;
    };
    struct Mailbox {
        std::mutex m;
        std::condition_variable cv;
        std::deque<Message> queue;
    };
    std::vector<std::unique_ptr<Mailbox>> boxes_;
    std::atomic<bool> aborted_{false};
};

/// Double-double accumulator; partial sums combined with it are, up to the
/// final rounding, independent of how the terms were split across workers.
struct CompensatedSum {
    double hi = 0.0;
    double lo = 0.0;

    void add(double x) noexcept
    {
        const double s = hi + x;
        const double bp = s - hi;
        const double err = (hi - (s - bp)) + (x - bp);
        hi = s;
        lo += err;
    }
    void merge(const CompensatedSum& o) noexcept
    {
        add(o.hi);
        lo += o.lo;
    }
    double value() const noexcept { return hi + lo; }
};

/// One group of workers (spatial or time) with point-to-point messaging and
/// synchronous ordered collectives. A size-1 group needs no transport.
class CommGroup {
public:
    CommGroup() = default;
    CommGroup(GroupInfo info, Transport* transport, int self_id);

    int size() const noexcept { return static_cast<int>(info_.members.size()); }
    int rank() const noexcept { return info_.rank; }
    GroupKind kind() const noexcept { return info_.kind; }
    const GroupInfo& info() const noexcept { return info_; }

    void send(int to_rank, int tag, std::vector<double> payload);
    std::vector<double> recv(int from_rank, int tag);

    /// Sums combined at rank 0 in ascending rank order; every member receives
    /// identical rounded values (lo parts are cleared).
    void allreduce_sum(std::span<CompensatedSum> values);
    double allreduce_sum(double value);
    void allreduce_max(std::span<double> values);
    double allreduce_max(double value);
    void barrier();

private:
    GroupInfo info_{GroupKind::Spatial, {0}, 0};
    Transport* transport_ = nullptr;
    int self_ = 0;
};

inline constexpr int kTagUserLimit = 1000;

/// Ship a full subdomain state (all arrays including ghosts, plus t) to a
/// member of the same TIME group.
void send_state(CommGroup& time_group, int to_rank, const FlowState& state, int tag = 200);
FlowState recv_state(CommGroup& time_group, int from_rank, int tag = 200);

struct WorkerContext {
    WorkerTopology topo;
    CommGroup spatial;
    CommGroup time;
};

/// Run `body` on every worker and wait. Single worker runs inline with no
/// channel machinery. The first exception raised by any worker is rethrown.
void launch(int n_space, int n_time, const std::function<void(WorkerContext&)>& body);

} // namespace stns
