#include "npt/checkpoint.hpp"

#include <cstring>

#include "binary_io.hpp"

namespace npt {

namespace {

constexpr char kMagic[4] = {'N', 'P', 'T', '1'};

void put_tensor(std::vector<std::uint8_t>& out, const std::string& name, const Tensor& t) {
    binio::put_string(out, name);
    const Shape& shape = t.shape();
    if (shape.size() > 0xff) throw std::length_error("checkpoint: tensor rank too large");
    binio::put_u8(out, static_cast<std::uint8_t>(shape.size()));
    for (std::int64_t d : shape) binio::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) binio::put_f32(out, v);
}

NamedTensorT<float> read_tensor(binio::Reader& r) {
    NamedTensorT<float> nt;
    nt.name = r.string();
    const int rank = r.u8();
    Shape shape(rank);
    std::int64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        shape[i] = static_cast<std::int64_t>(r.u32());
        numel *= shape[i];
    }
    std::vector<float> data(static_cast<std::size_t>(numel));
    for (float& v : data) v = r.f32();
    nt.tensor = Tensor::from_data(shape, std::move(data));
    return nt;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    binio::put_u32(out, kCheckpointVersion);

    binio::put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& item : ckpt.params) put_tensor(out, item.name, item.tensor);

    binio::put_string(out, ckpt.descriptor);
    binio::put_u32(out, ckpt.epoch);
    binio::put_u64(out, ckpt.base_seed);

    binio::put_u32(out, static_cast<std::uint32_t>(ckpt.momentum.velocity.size()));
    for (const auto& item : ckpt.momentum.velocity) put_tensor(out, item.name, item.tensor);

    binio::put_u32(out, static_cast<std::uint32_t>(ckpt.seed_manifest.size()));
    for (const auto& [key, value] : ckpt.seed_manifest) {
        binio::put_string(out, key);
        binio::put_u64(out, value);
    }

    binio::put_u32(out, binio::crc32(out.data(), out.size()));
    return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    // Magic first so foreign files report as such, then the CRC so any
    // truncation or corruption is caught before field parsing begins.
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw BadMagicError("checkpoint: bad magic");
    if (bytes.size() < 12) throw BadCrcError("checkpoint: file too short");

    binio::Reader tail(bytes.data() + bytes.size() - 4, 4);
    const std::uint32_t stored = tail.u32();
    const std::uint32_t actual = binio::crc32(bytes.data(), bytes.size() - 4);
    if (stored != actual) throw BadCrcError("checkpoint: CRC mismatch");

    binio::Reader r(bytes.data(), bytes.size() - 4);
    r.u32();  // magic, already checked
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw BadVersionError(str_cat("checkpoint: unsupported version ", version));

    Checkpoint ckpt;
    const std::uint32_t n_params = r.u32();
    for (std::uint32_t i = 0; i < n_params; ++i) {
        auto nt = read_tensor(r);
        ckpt.params.add(std::move(nt.name), std::move(nt.tensor));
    }

    ckpt.descriptor = r.string();
    ckpt.epoch = r.u32();
    ckpt.base_seed = r.u64();

    const std::uint32_t n_vel = r.u32();
    for (std::uint32_t i = 0; i < n_vel; ++i) ckpt.momentum.velocity.push_back(read_tensor(r));

    const std::uint32_t n_seeds = r.u32();
    for (std::uint32_t i = 0; i < n_seeds; ++i) {
        std::string key = r.string();
        const std::uint64_t value = r.u64();
        ckpt.seed_manifest.emplace_back(std::move(key), value);
    }
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    binio::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
    return decode_checkpoint(binio::read_file(path));
}

}  // namespace npt
