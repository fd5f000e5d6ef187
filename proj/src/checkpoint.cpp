#include "dban/checkpoint.hpp"

#include "dban/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

namespace dban {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'B', 'A', 'N', 'C', 'K', 'P', 'T'};

struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::uint64_t offset = 0;
    std::uint64_t count = 0;
    const float* source = nullptr; // save side only
};

template <typename V>
void put(std::string& buf, V v) {
    char bytes[sizeof(V)];
    std::memcpy(bytes, &v, sizeof(V));
    buf.append(bytes, sizeof(V));
}

class Reader {
public:
    Reader(const std::string& data, std::string path) : data_(data), path_(std::move(path)) {}

    template <typename V>
    V get() {
        V v;
        need(sizeof(V));
        std::memcpy(&v, data_.data() + pos_, sizeof(V));
        pos_ += sizeof(V);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size())
            throw IoError("checkpoint '" + path_ + "' is truncated");
    }
    const std::string& data_;
    std::string path_;
    std::size_t pos_ = 0;
};

void collect(std::vector<Entry>& entries, const ModelParams<float>& m, const std::string& prefix) {
    visit_params(m, [&](const std::string& name, std::span<const float> v, const std::vector<int>& dims) {
        Entry e;
        e.name = prefix + name;
        for (int d : dims)
            e.dims.push_back(static_cast<std::uint32_t>(d));
        e.count = v.size();
        e.source = v.data();
        entries.push_back(std::move(e));
    });
}

void fill(ModelParams<float>& m, const std::string& prefix, const std::map<std::string, Entry>& index,
          const std::string& data, std::size_t data_start, const std::string& path) {
    visit_params(m, [&](const std::string& name, std::span<float> v, const std::vector<int>& dims) {
        const auto it = index.find(prefix + name);
        if (it == index.end())
            throw IoError("checkpoint '" + path + "' has no entry '" + prefix + name + "'");
        const Entry& e = it->second;
        const bool dims_ok = e.dims.size() == dims.size() &&
                             std::equal(dims.begin(), dims.end(), e.dims.begin(),
                                        [](int a, std::uint32_t b) { return static_cast<std::uint32_t>(a) == b; });
        if (!dims_ok || e.count != v.size())
            throw IoError("checkpoint '" + path + "' entry '" + e.name + "' has the wrong shape");
        const std::size_t begin = data_start + e.offset;
        if (begin + e.count * sizeof(float) > data.size())
            throw IoError("checkpoint '" + path + "' entry '" + e.name + "' points past the end of the file");
        std::memcpy(v.data(), data.data() + begin, e.count * sizeof(float));
    });
}

} // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    check_channel_plan(ckpt.params, ckpt.config);
    std::vector<Entry> entries;
    collect(entries, ckpt.params, "");
    if (ckpt.adam) {
        collect(entries, ckpt.adam->m, "adam.m/");
        collect(entries, ckpt.adam->v, "adam.v/");
    }
    std::uint64_t offset = 0;
    for (auto& e : entries) {
        e.offset = offset;
        offset += e.count * sizeof(float);
    }

    std::string buf(kMagic, sizeof kMagic);
    put<std::uint32_t>(buf, kCheckpointVersion);
    const ModelConfig& c = ckpt.config;
    for (int v : {c.scale, c.in_channels, c.num_units, c.layers_per_unit, c.growth, c.feat_channels,
                  c.bottleneck_channels, c.attention_ratio})
        put<std::int32_t>(buf, v);
    put<std::int64_t>(buf, ckpt.adam ? ckpt.adam->t : ckpt.step);
    put<double>(buf, ckpt.learning_rate);
    put<std::uint32_t>(buf, ckpt.adam ? 1u : 0u);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.name.size()));
        buf += e.name;
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(e.dims.size()));
        for (auto d : e.dims)
            put<std::uint32_t>(buf, d);
        put<std::uint64_t>(buf, e.offset);
        put<std::uint64_t>(buf, e.count);
    }
    for (const auto& e : entries)
        buf.append(reinterpret_cast<const char*>(e.source), e.count * sizeof(float));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot write checkpoint '" + path + "'");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw IoError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint '" + path + "'");
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data, path);
    if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic))
        throw IoError("'" + path + "' is not a checkpoint file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint '" + path + "' has format version " + std::to_string(version) +
                           ", expected " + std::to_string(kCheckpointVersion));

    Checkpoint ckpt;
    ModelConfig& c = ckpt.config;
    for (int* field : {&c.scale, &c.in_channels, &c.num_units, &c.layers_per_unit, &c.growth, &c.feat_channels,
                       &c.bottleneck_channels, &c.attention_ratio})
        *field = r.get<std::int32_t>();
    try {
        validate(c);
    } catch (const ConfigError& e) {
        throw IoError("checkpoint '" + path + "' has an invalid model config: " + e.what());
    }
    ckpt.step = r.get<std::int64_t>();
    ckpt.learning_rate = r.get<double>();
    const auto flags = r.get<std::uint32_t>();
    const auto count = r.get<std::uint32_t>();
    std::map<std::string, Entry> index;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8)
            throw IoError("checkpoint '" + path + "' entry '" + e.name + "' has implausible rank");
        for (std::uint32_t k = 0; k < rank; ++k)
            e.dims.push_back(r.get<std::uint32_t>());
        e.offset = r.get<std::uint64_t>();
        e.count = r.get<std::uint64_t>();
        index.emplace(e.name, std::move(e));
    }
    const std::size_t data_start = r.pos();

    ckpt.params = build_model<float>(c, 0);
    fill(ckpt.params, "", index, data, data_start, path);
    if (flags & 1u) {
        AdamState<float> adam = AdamState<float>::fresh(ckpt.params);
        fill(adam.m, "adam.m/", index, data, data_start, path);
        fill(adam.v, "adam.v/", index, data, data_start, path);
        adam.t = ckpt.step;
        ckpt.adam = std::move(adam);
    }
    return ckpt;
}

} // namespace dban
