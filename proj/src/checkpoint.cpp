#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "coopshap/harness.hpp"

namespace coopshap::marl {

// Checkpoint access to the replay ring's internals.
struct BufferCodec {
    static const std::vector<Transition>& data(const ReplayBuffer& b) { return b.data_; }
    static std::size_t cursor(const ReplayBuffer& b) { return b.cursor_; }
    static void restore(ReplayBuffer& b, std::vector<Transition> data, std::size_t cursor) {
        b.data_ = std::move(data);
        b.cursor_ = cursor;
    }
};

}  // namespace coopshap::marl

namespace coopshap::harness {

namespace {

static_assert(sizeof(double) == 8, "checkpoint format needs 64-bit doubles");

constexpr const char* kMagic = "coopshap-checkpoint v1";

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct Writer {
    std::string bytes;

    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
    void f64(double d) {
        std::uint64_t v;
        std::memcpy(&v, &d, 8);
        u64(v);
    }
    void vec(const std::vector<double>& v) {
        u64(v.size());
        for (double d : v) f64(d);
    }
};

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;
    std::string segment;  // for error messages

    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw std::runtime_error("checkpoint: segment '" + segment + "' truncated");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::vector<double> vec() {
        const std::uint64_t n = u64();
        need(n * 8);
        std::vector<double> v(n);
        for (auto& d : v) d = f64();
        return v;
    }
    void done() const {
        if (pos != bytes.size())
            throw std::runtime_error("checkpoint: segment '" + segment + "' has trailing bytes");
    }
};

std::string encode_network(const marl::NetWithTarget& n) {
    Writer w;
    w.u64(n.spec.layers.size());
    for (int s : n.spec.layers) w.i64(s);
    w.vec(n.params);
    w.vec(n.target);
    w.vec(n.opt.m);
    w.vec(n.opt.v);
    w.i64(n.opt.step);
    w.f64(n.opt.lr);
    w.f64(n.opt.beta1);
    w.f64(n.opt.beta2);
    w.f64(n.opt.eps);
    return std::move(w.bytes);
}

void decode_network(Reader& r, marl::NetWithTarget& n) {
    const std::uint64_t layers = r.u64();
    n.spec.layers.resize(layers);
    for (auto& s : n.spec.layers) s = static_cast<int>(r.i64());
    n.spec.validate();
    n.params = r.vec();
    n.target = r.vec();
    n.opt.m = r.vec();
    n.opt.v = r.vec();
    n.opt.step = static_cast<long>(r.i64());
    n.opt.lr = r.f64();
    n.opt.beta1 = r.f64();
    n.opt.beta2 = r.f64();
    n.opt.eps = r.f64();
    const std::size_t expect = static_cast<std::size_t>(n.spec.param_count());
    for (const auto* v : {&n.params, &n.target, &n.opt.m, &n.opt.v})
        if (v->size() != expect)
            throw std::runtime_error("checkpoint: segment '" + r.segment +
                                     "' parameter length mismatch");
}

std::string encode_buffer(const marl::ReplayBuffer& b, int n_agents) {
    const auto& data = marl::BufferCodec::data(b);
    Writer w;
    w.u64(b.capacity());
    w.u64(data.size());
    w.u64(marl::BufferCodec::cursor(b));
    w.u64(static_cast<std::uint64_t>(n_agents));
    for (const marl::Transition& t : data) {
        w.u64(t.coalition);
        for (const auto& o : t.obs) w.vec(o);
        for (const auto& a : t.actions) w.vec(a);
        for (double r : t.rewards) w.f64(r);
        for (const auto& o : t.next_obs) w.vec(o);
    }
    return std::move(w.bytes);
}

marl::ReplayBuffer decode_buffer(Reader& r) {
    const std::uint64_t capacity = r.u64();
    const std::uint64_t size = r.u64();
    const std::uint64_t cursor = r.u64();
    const int n = static_cast<int>(r.u64());
    if (size > capacity || cursor > capacity)
        throw std::runtime_error("checkpoint: segment 'buffer' is inconsistent");
    std::vector<marl::Transition> data(size);
    for (auto& t : data) {
        t.coalition = static_cast<marl::Mask>(r.u64());
        t.obs.resize(n);
        t.actions.resize(n);
        t.rewards.resize(n);
        t.next_obs.resize(n);
        for (auto& o : t.obs) o = r.vec();
        for (auto& a : t.actions) a = r.vec();
        for (auto& x : t.rewards) x = r.f64();
        for (auto& o : t.next_obs) o = r.vec();
    }
    marl::ReplayBuffer buffer(capacity);
    marl::BufferCodec::restore(buffer, std::move(data), cursor);
    return buffer;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainerState& state,
                     const RunConfig& config) {
    std::vector<std::pair<std::string, std::string>> segments;
    segments.emplace_back("config", config_echo(config));
    {
        std::ostringstream rs;
        state.rng.save(rs);
        segments.emplace_back("rng", rs.str());
    }
    {
        Writer w;
        w.i64(state.episode);
        w.i64(state.agents.n);
        w.i64(state.agents.obs_dim);
        w.i64(static_cast<int>(state.agents.kind));
        segments.emplace_back("counters", std::move(w.bytes));
    }
    for (std::size_t i = 0; i < state.agents.actors.size(); ++i)
        segments.emplace_back("actor" + std::to_string(i),
                              encode_network(state.agents.actors[i]));
    for (std::size_t i = 0; i < state.agents.critics.size(); ++i)
        segments.emplace_back("critic" + std::to_string(i),
                              encode_network(state.agents.critics[i]));
    segments.emplace_back("buffer", encode_buffer(state.buffer, state.agents.n));

    std::ostringstream out;
    out << kMagic << "\n" << "segments " << segments.size() << "\n";
    for (const auto& [name, bytes] : segments) {
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(bytes)));
        out << "seg " << name << " " << bytes.size() << " " << hex << "\n";
    }
    out << "end\n";
    for (const auto& [name, bytes] : segments) out << bytes;

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    const std::string blob = out.str();
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

TrainerState load_checkpoint(const std::string& path, const RunConfig& config) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    const std::string blob = ss.str();

    std::istringstream header(blob);
    std::string line;
    if (!std::getline(header, line) || line != kMagic)
        throw std::runtime_error("checkpoint: unrecognized format/version header");
    std::size_t count = 0;
    {
        std::string tag;
        if (!(header >> tag >> count) || tag != "segments")
            throw std::runtime_error("checkpoint: malformed segment count");
        std::getline(header, line);
    }
    struct SegInfo {
        std::string name;
        std::size_t len;
        std::string checksum;
    };
    std::vector<SegInfo> infos(count);
    for (auto& info : infos) {
        std::string tag;
        if (!(header >> tag >> info.name >> info.len >> info.checksum) || tag != "seg")
            throw std::runtime_error("checkpoint: malformed manifest entry");
    }
    std::getline(header, line);
    if (!std::getline(header, line) || line != "end")
        throw std::runtime_error("checkpoint: manifest missing terminator");

    std::size_t pos = static_cast<std::size_t>(header.tellg());
    std::vector<std::pair<std::string, std::string>> segments;
    for (const auto& info : infos) {
        if (pos + info.len > blob.size())
            throw std::runtime_error("checkpoint: segment '" + info.name + "' truncated");
        std::string bytes = blob.substr(pos, info.len);
        pos += info.len;
        char hex[17];
        std::snprintf(hex, sizeof hex, "%016llx",
                      static_cast<unsigned long long>(fnv1a(bytes)));
        if (info.checksum != hex)
            throw std::runtime_error("checkpoint: segment '" + info.name +
                                     "' checksum mismatch");
        segments.emplace_back(info.name, std::move(bytes));
    }
    if (pos != blob.size())
        throw std::runtime_error("checkpoint: trailing bytes after last segment");

    auto find = [&](const std::string& name) -> const std::string& {
        for (const auto& [n, b] : segments)
            if (n == name) return b;
        throw std::runtime_error("checkpoint: missing segment '" + name + "'");
    };

    TrainerState state;
    {
        std::istringstream rs(find("rng"));
        state.rng.load(rs);
        if (!rs) throw std::runtime_error("checkpoint: segment 'rng' unreadable");
    }
    int n_agents, obs_dim, kind;
    {
        Reader r{find("counters"), 0, "counters"};
        state.episode = static_cast<long>(r.i64());
        n_agents = static_cast<int>(r.i64());
        obs_dim = static_cast<int>(r.i64());
        kind = static_cast<int>(r.i64());
        r.done();
    }
    state.agents.kind = static_cast<marl::Algorithm>(kind);
    state.agents.n = n_agents;
    state.agents.obs_dim = obs_dim;
    if (state.agents.kind != config.algorithm)
        throw std::runtime_error("checkpoint: algorithm does not match the supplied config");

    state.agents.actors.resize(n_agents);
    for (int i = 0; i < n_agents; ++i) {
        const std::string name = "actor" + std::to_string(i);
        Reader r{find(name), 0, name};
        decode_network(r, state.agents.actors[i]);
        r.done();
    }
    const int critics = state.agents.kind == marl::Algorithm::Shapley ? (n_agents > 0 ? 1 : 0)
                                                                      : n_agents;
    state.agents.critics.resize(critics);
    for (int i = 0; i < critics; ++i) {
        const std::string name = "critic" + std::to_string(i);
        Reader r{find(name), 0, name};
        decode_network(r, state.agents.critics[i]);
        r.done();
    }
    {
        Reader r{find("buffer"), 0, "buffer"};
        state.buffer = decode_buffer(r);
        r.done();
    }
    return state;
}

}  // namespace coopshap::harness
