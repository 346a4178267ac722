#include "pcad/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace pcad {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'P', 'C', 'A', 'D', 'C', 'K', 'P', '1'};
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    return h;
}

json config_to_json(const BackboneConfig& c) {
    return json{{"g1", c.g1},
                {"mid", c.mid},
                {"out", c.out},
                {"align1", {{"point", c.align1.point}, {"dense", c.align1.dense}}},
                {"align2", {{"point", c.align2.point}, {"dense", c.align2.dense}}},
                {"num_parts", c.num_parts},
                {"seg_hidden", c.seg_hidden}};
}

BackboneConfig config_from_json(const json& j) {
    BackboneConfig c;
    c.g1 = j.at("g1").get<std::vector<int>>();
    c.mid = j.at("mid").get<int>();
    c.out = j.at("out").get<int>();
    c.align1.point = j.at("align1").at("point").get<std::vector<int>>();
    c.align1.dense = j.at("align1").at("dense").get<std::vector<int>>();
    c.align2.point = j.at("align2").at("point").get<std::vector<int>>();
    c.align2.dense = j.at("align2").at("dense").get<std::vector<int>>();
    c.num_parts = j.at("num_parts").get<int>();
    c.seg_hidden = j.at("seg_hidden").get<std::vector<int>>();
    c.validate();
    return c;
}

namespace {

std::vector<TensorRef> all_tensors(BackboneParams& p) {
    auto refs = trainable_tensors(p);
    auto stats = stat_tensors(p);
    refs.insert(refs.end(), stats.begin(), stats.end());
    return refs;
}

}  // namespace

void save_checkpoint(const std::string& path, BackboneParams& params, const std::string& kind,
                     const json& meta) {
    auto refs = all_tensors(params);

    std::string data;
    json dir = json::array();
    for (const auto& ref : refs) {
        dir.push_back({{"name", ref.name}, {"size", ref.data->size()}});
        data.append(reinterpret_cast<const char*>(ref.data->data()),
                    ref.data->size() * sizeof(float));
    }
    json steps = json::array();
    for (const auto& [name, sp] : bn_step_refs(params)) steps.push_back(*sp);

    json header{{"version", 1},
                {"kind", kind},
                {"config", config_to_json(params.config)},
                {"tensors", dir},
                {"bn_steps", steps},
                {"data_fnv1a64", fnv1a64(data.data(), data.size())},
                {"meta", meta}};
    std::string hstr = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof kMagic);
    uint32_t hlen = static_cast<uint32_t>(hstr.size());
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(hstr.data(), hstr.size());
    out.write(data.data(), data.size());
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
    uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!in) throw std::runtime_error(path + ": truncated header length");
    std::string hstr(hlen, '\0');
    in.read(hstr.data(), hlen);
    if (!in) throw std::runtime_error(path + ": truncated header");
    json header;
    try {
        header = json::parse(hstr);
    } catch (const json::exception& e) {
        throw std::runtime_error(path + ": invalid header JSON (" + std::string(e.what()) + ")");
    }
    if (header.at("version").get<int>() != 1)
        throw std::runtime_error(path + ": unsupported checkpoint version");

    Checkpoint ck;
    ck.kind = header.at("kind").get<std::string>();
    ck.meta = header.value("meta", json::object());
    BackboneConfig config = config_from_json(header.at("config"));
    ck.params = init_params(config, 0);

    auto refs = all_tensors(ck.params);
    const json& dir = header.at("tensors");
    if (dir.size() != refs.size())
        throw std::runtime_error(path + ": tensor directory size mismatch");

    std::string data;
    size_t total = 0;
    for (const auto& e : dir) total += e.at("size").get<size_t>() * sizeof(float);
    data.resize(total);
    in.read(data.data(), static_cast<std::streamsize>(total));
    if (in.gcount() != static_cast<std::streamsize>(total))
        throw std::runtime_error(path + ": truncated tensor data");

    uint64_t want = header.at("data_fnv1a64").get<uint64_t>();
    ck.data_checksum = fnv1a64(data.data(), data.size());
    if (ck.data_checksum != want) throw std::runtime_error(path + ": data checksum mismatch");

    size_t off = 0;
    for (size_t i = 0; i < refs.size(); ++i) {
        const auto& e = dir[i];
        if (e.at("name").get<std::string>() != refs[i].name)
            throw std::runtime_error(path + ": tensor order mismatch at " + refs[i].name);
        size_t sz = e.at("size").get<size_t>();
        if (sz != refs[i].data->size())
            throw std::runtime_error(path + ": shape mismatch for " + refs[i].name + " (file " +
                                     std::to_string(sz) + ", arch " +
                                     std::to_string(refs[i].data->size()) + ")");
        std::memcpy(refs[i].data->data(), data.data() + off, sz * sizeof(float));
        off += sz * sizeof(float);
    }

    auto steps = bn_step_refs(ck.params);
    const json& jsteps = header.at("bn_steps");
    if (jsteps.size() != steps.size()) throw std::runtime_error(path + ": bn_steps size mismatch");
    for (size_t i = 0; i < steps.size(); ++i) *steps[i].second = jsteps[i].get<int64_t>();
    return ck;
}

}  // namespace pcad
