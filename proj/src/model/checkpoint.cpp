#include "fre/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fre/random.hpp"

namespace fre::model {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'F', 'R', 'E', 'C', 'K', 'P', 'T', '\0'};

class Writer {
public:
    template <typename V>
    void put(V v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        bytes_.append(p, sizeof(V));
    }
    void put_bytes(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string file) : bytes_(bytes), file_(std::move(file)) {}

    template <typename V>
    V get() {
        V v;
        std::memcpy(&v, take(sizeof(V)), sizeof(V));
        return v;
    }
    const char* take(std::size_t n) {
        if (pos_ + n > bytes_.size()) throw DataError(file_, "truncated checkpoint");
        const char* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::size_t pos() const { return pos_; }

private:
    const std::string& bytes_;
    std::string file_;
    std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view bytes) { return hash_name(bytes); }

}  // namespace

const NamedTensor* CheckpointData::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return &t;
    }
    return nullptr;
}

ModelConfig CheckpointData::model_config() const { return model_config_from_json(header.at("model")); }

const Json& CheckpointData::meta() const {
    static const Json empty = Json::object();
    auto it = header.find("meta");
    return it == header.end() ? empty : *it;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointData& data) {
    Writer w;
    w.put_bytes(kMagic, sizeof(kMagic));
    w.put<std::uint32_t>(kCheckpointVersion);
    const std::string header = data.header.dump();
    w.put<std::uint64_t>(header.size());
    w.put_bytes(header.data(), header.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(data.tensors.size()));
    for (const auto& t : data.tensors) {
        if (t.values.size() != ag::numel(t.shape)) throw ShapeError("write_checkpoint", "tensor '" + t.name + "' size mismatch");
        w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
        w.put_bytes(t.name.data(), t.name.size());
        w.put<std::uint8_t>(static_cast<std::uint8_t>(t.shape.size()));
        for (int d : t.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
        w.put_bytes(t.values.data(), t.values.size() * sizeof(float));
    }
    const std::uint64_t hash = fnv1a(w.bytes());
    w.put<std::uint64_t>(hash);

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError(tmp.string(), "cannot open for writing");
        out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        if (!out) throw DataError(tmp.string(), "write failed");
    }
    std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path.string(), "cannot open checkpoint");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    const std::string file = path.string();
    if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw DataError(file, "not a checkpoint (bad magic)");
    }
    std::uint64_t stored_hash;
    std::memcpy(&stored_hash, bytes.data() + bytes.size() - 8, 8);
    if (fnv1a(std::string_view(bytes).substr(0, bytes.size() - 8)) != stored_hash) {
        throw DataError(file, "checkpoint checksum mismatch");
    }

    Reader r(bytes, file);
    r.take(sizeof(kMagic));
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) throw DataError(file, "unsupported checkpoint version " + std::to_string(version));
    const auto header_len = r.get<std::uint64_t>();
    CheckpointData data;
    const char* header = r.take(header_len);
    try {
        data.header = Json::parse(header, header + header_len);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(file, std::string("bad checkpoint header: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    data.tensors.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const auto name_len = r.get<std::uint16_t>();
        t.name.assign(r.take(name_len), name_len);
        const auto rank = r.get<std::uint8_t>();
        if (rank < 1 || rank > 4) throw DataError(file, "tensor '" + t.name + "' has invalid rank");
        for (int d = 0; d < rank; ++d) t.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
        t.values.resize(ag::numel(t.shape));
        std::memcpy(t.values.data(), r.take(t.values.size() * sizeof(float)), t.values.size() * sizeof(float));
        data.tensors.push_back(std::move(t));
    }
    if (r.pos() != bytes.size() - 8) throw DataError(file, "trailing bytes in checkpoint");
    return data;
}

template <typename T>
CheckpointData make_checkpoint(const Network<T>& net, Json meta) {
    CheckpointData data;
    data.header = Json{{"format", "fre-checkpoint"},
                       {"model", model_config_to_json(net.config())},
                       {"meta", std::move(meta)}};
    for (const auto& e : net.parameters().entries()) {
        NamedTensor t{e.name, e.tensor.shape(), {}};
        t.values.reserve(e.tensor.numel());
        for (T v : e.tensor.data()) t.values.push_back(static_cast<float>(v));
        data.tensors.push_back(std::move(t));
    }
    return data;
}

template <typename T>
void load_parameters(ParameterStore<T>& store, const CheckpointData& data) {
    for (auto& e : store.entries()) {
        const auto* src = data.find(e.name);
        if (src == nullptr) throw DataError("", "checkpoint is missing parameter '" + e.name + "'");
        if (src->shape != e.tensor.shape()) {
            throw ShapeError("load_parameters", "parameter '" + e.name + "' has shape " + ag::to_string(src->shape) +
                                                    ", expected " + ag::to_string(e.tensor.shape()));
        }
        auto dst = e.tensor.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src->values[i]);
    }
}

template <typename T>
Network<T> network_from_checkpoint(const CheckpointData& data) {
    auto net = Network<T>::build(data.model_config(), 0);
    load_parameters(net.parameters(), data);
    return net;
}

template CheckpointData make_checkpoint(const Network<float>&, Json);
template CheckpointData make_checkpoint(const Network<double>&, Json);
template void load_parameters(ParameterStore<float>&, const CheckpointData&);
template void load_parameters(ParameterStore<double>&, const CheckpointData&);
template Network<float> network_from_checkpoint(const CheckpointData&);
template Network<double> network_from_checkpoint(const CheckpointData&);

}  // namespace fre::model
