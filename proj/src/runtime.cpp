#include "stns/runtime.hpp"

#include <algorithm>
#include <exception>
#include <string>
#include <thread>

namespace stns {

namespace {

constexpr int kTagReduceUp = 1000;
constexpr int kTagReduceDown = 1001;
constexpr int kTagMaxUp = 1002;
constexpr int kTagMaxDown = 1003;

} // namespace

int worker_id(WorkerCoord coord, int n_space) noexcept
{
    return coord.time_rank * n_space + coord.space_rank;
}

std::vector<WorkerTopology> build_topology(int n_space, int n_time)
{
    if (n_space < 1 || n_time < 1)
        throw std::invalid_argument("worker counts must be at least 1");
    std::vector<WorkerTopology> out;
    out.reserve(static_cast<std::size_t>(n_space) * n_time);
    for (int t = 0; t < n_time; ++t)
        for (int s = 0; s < n_space; ++s) {
            WorkerTopology w;
            w.coord = {s, t};
            w.id = worker_id(w.coord, n_space);
            w.spatial.kind = GroupKind::Spatial;
            w.spatial.rank = s;
            for (int m = 0; m < n_space; ++m)
                w.spatial.members.push_back(worker_id({m, t}, n_space));
            w.time.kind = GroupKind::Time;
            w.time.rank = t;
            for (int m = 0; m < n_time; ++m)
                w.time.members.push_back(worker_id({s, m}, n_space));
            out.push_back(std::move(w));
        }
    return out;
}

// ---------------------------------------------------------------------------

Transport::Transport(int workers)
{
    boxes_.reserve(static_cast<std::size_t>(workers));
    for (int i = 0; i < workers; ++i)
        boxes_.push_back(std::make_unique<Mailbox>());
}

void Transport::send(int from, int to, int tag, std::vector<double> payload)
{
    if (aborted())
        throw CommAborted();
    auto& box = *boxes_.at(static_cast<std::size_t>(to));
    {
        std::lock_guard lock(box.m);
        box.queue.push_back(Message{from, tag, std::move(payload)});
    }
    box.cv.notify_all();
}

std::vector<double> Transport::recv(int self, int from, int tag)
{
    auto& box = *boxes_.at(static_cast<std::size_t>(self));
    std::unique_lock lock(box.m);
    for (;;) {
        auto it = std::find_if(box.queue.begin(), box.queue.end(),
                               [&](const Message& m) { return m.from == from && m.tag == tag; });
        if (it != box.queue.end()) {
            std::vector<double> payload = std::move(it->payload);
            box.queue.erase(it);
            return payload;
        }
        if (aborted())
            throw CommAborted();
        box.cv.wait(lock);
    }
}

void Transport::abort()
{
    aborted_.store(true);
    for (auto& box : boxes_) {
        std::lock_guard lock(box->m);
        box->cv.notify_all();
    }
}

// ---------------------------------------------------------------------------

CommGroup::CommGroup(GroupInfo info, Transport* transport, int self_id)
    : info_(std::move(info)), transport_(transport), self_(self_id)
{
    if (info_.members.empty() || info_.rank < 0 || info_.rank >= size())
        throw std::invalid_argument("malformed communication group");
    if (size() > 1 && transport_ == nullptr)
        throw std::invalid_argument("multi-member group needs a transport");
}

void CommGroup::send(int to_rank, int tag, std::vector<double> payload)
{
    if (to_rank < 0 || to_rank >= size() || to_rank == rank())
        throw std::invalid_argument("send to invalid group rank " + std::to_string(to_rank));
    transport_->send(self_, info_.members[static_cast<std::size_t>(to_rank)], tag, std::move(payload));
}

std::vector<double> CommGroup::recv(int from_rank, int tag)
{
    if (from_rank < 0 || from_rank >= size() || from_rank == rank())
        throw std::invalid_argument("recv from invalid group rank " + std::to_string(from_rank));
    return transport_->recv(self_, info_.members[static_cast<std::size_t>(from_rank)], tag);
}

void CommGroup::allreduce_sum(std::span<CompensatedSum> values)
{
    if (size() == 1) {
        for (auto& v : values)
            v = {v.value(), 0.0};
        return;
    }
    const std::size_t n = values.size();
    if (rank() != 0) {
        std::vector<double> out(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            out[2 * i] = values[i].hi;
            out[2 * i + 1] = values[i].lo;
        }
        send(0, kTagReduceUp, std::move(out));
        const auto result = recv(0, kTagReduceDown);
        if (result.size() != n)
            throw std::runtime_error("reduction size mismatch");
        for (std::size_t i = 0; i < n; ++i)
            values[i] = {result[i], 0.0};
        return;
    }
    for (int r = 1; r < size(); ++r) {
        const auto in = recv(r, kTagReduceUp);
        if (in.size() != 2 * n)
            throw std::runtime_error("reduction size mismatch from rank " + std::to_string(r));
        for (std::size_t i = 0; i < n; ++i)
            values[i].merge({in[2 * i], in[2 * i + 1]});
    }
    std::vector<double> result(n);
    for (std::size_t i = 0; i < n; ++i) {
        result[i] = values[i].value();
        values[i] = {result[i], 0.0};
    }
    for (int r = 1; r < size(); ++r)
        send(r, kTagReduceDown, result);
}

double CommGroup::allreduce_sum(double value)
{
    CompensatedSum s{value, 0.0};
    allreduce_sum(std::span<CompensatedSum>(&s, 1));
    return s.hi;
}

void CommGroup::allreduce_max(std::span<double> values)
{
    if (size() == 1)
        return;
    if (rank() != 0) {
        send(0, kTagMaxUp, std::vector<double>(values.begin(), values.end()));
        const auto result = recv(0, kTagMaxDown);
        if (result.size() != values.size())
            throw std::runtime_error("reduction size mismatch");
        std::copy(result.begin(), result.end(), values.begin());
        return;
    }
    for (int r = 1; r < size(); ++r) {
        const auto in = recv(r, kTagMaxUp);
        if (in.size() != values.size())
            throw std::runtime_error("reduction size mismatch from rank " + std::to_string(r));
        for (std::size_t i = 0; i < values.size(); ++i)
            // NaN propagates so every member sees a blow-up.
            if (!(values[i] >= in[i]))
                values[i] = in[i];
    }
    for (int r = 1; r < size(); ++r)
        send(r, kTagMaxDown, std::vector<double>(values.begin(), values.end()));
}

double CommGroup::allreduce_max(double value)
{
    allreduce_max(std::span<double>(&value, 1));
    return value;
}

void CommGroup::barrier()
{
    allreduce_max(0.0);
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kStateMagic = 5318008.0;

void append(std::vector<double>& out, const Field& f)
{
    const auto raw = f.raw();
    out.insert(out.end(), raw.begin(), raw.end());
}

} // namespace

void send_state(CommGroup& time_group, int to_rank, const FlowState& state, int tag)
{
    if (time_group.kind() != GroupKind::Time)
        throw std::logic_error("flow states travel only inside time groups");
    std::vector<double> msg;
    msg.reserve(8 + 3 * state.u().raw().size() + state.p.raw().size());
    msg.push_back(kStateMagic);
    for (int a = 0; a < 3; ++a)
        msg.push_back(state.block.lo[a]);
    for (int a = 0; a < 3; ++a)
        msg.push_back(state.block.n[a]);
    msg.push_back(state.t);
    for (const auto& f : state.vel)
        append(msg, f);
    append(msg, state.p);
    time_group.send(to_rank, tag, std::move(msg));
}

FlowState recv_state(CommGroup& time_group, int from_rank, int tag)
{
    if (time_group.kind() != GroupKind::Time)
        throw std::logic_error("flow states travel only inside time groups");
    const auto msg = time_group.recv(from_rank, tag);
    if (msg.size() < 8 || msg[0] != kStateMagic)
        throw std::runtime_error("malformed state message");
    FlowState s;
    for (int a = 0; a < 3; ++a) {
        s.block.lo[a] = static_cast<int>(msg[1 + a]);
        s.block.n[a] = static_cast<int>(msg[4 + a]);
    }
    s.t = msg[7];
    for (auto& f : s.vel)
        f = Field(s.block.n, kVelocityGhost, 0.0);
    s.p = Field(s.block.n, kPressureGhost, 0.0);
    std::size_t need = 8 + 3 * s.u().raw().size() + s.p.raw().size();
    if (msg.size() != need)
        throw std::runtime_error("state message size mismatch: got " + std::to_string(msg.size()) +
                                 ", expected " + std::to_string(need));
    std::size_t pos = 8;
    auto take = [&](Field& f) {
        auto raw = f.raw();
        std::copy(msg.begin() + static_cast<std::ptrdiff_t>(pos),
                  msg.begin() + static_cast<std::ptrdiff_t>(pos + raw.size()), raw.begin());
        pos += raw.size();
    };
    for (auto& f : s.vel)
        take(f);
    take(s.p);
    return s;
}

// ---------------------------------------------------------------------------

void launch(int n_space, int n_time, const std::function<void(WorkerContext&)>& body)
{
    const auto topo = build_topology(n_space, n_time);
    if (topo.size() == 1) {
        WorkerContext ctx{topo[0], CommGroup(topo[0].spatial, nullptr, 0),
                          CommGroup(topo[0].time, nullptr, 0)};
        body(ctx);
        return;
    }

    Transport transport(static_cast<int>(topo.size()));
    std::vector<std::exception_ptr> errors(topo.size());
    std::vector<std::thread> threads;
    threads.reserve(topo.size());
    for (const auto& w : topo) {
        threads.emplace_back([&, w] {
            try {
                WorkerContext ctx{w, CommGroup(w.spatial, &transport, w.id),
                                  CommGroup(w.time, &transport, w.id)};
                body(ctx);
            } catch (...) {
                errors[static_cast<std::size_t>(w.id)] = std::current_exception();
                transport.abort();
            }
        });
    }
    for (auto& t : threads)
        t.join();

    // Report the root cause, not the aborts it triggered elsewhere.
    std::exception_ptr first_abort;
    for (const auto& e : errors) {
        if (!e)
            continue;
        try {
            std::rethrow_exception(e);
        } catch (const CommAborted&) {
            if (!first_abort)
                first_abort = e;
        } catch (...) {
            throw;
        }
    }
    if (first_abort)
        std::rethrow_exception(first_abort);
}

} // namespace stns
