#include "npt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "binary_io.hpp"
#include "npt/rng.hpp"

namespace npt {

namespace fs = std::filesystem;

namespace binio {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    if (size) in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw std::runtime_error("short read: " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write: " + path);
}

}  // namespace binio

LabeledImages LabeledImages::subset(const std::vector<int>& indices) const {
    const std::int64_t img = static_cast<std::int64_t>(images.numel()) / std::max(1, size());
    Shape shape = images.shape();
    shape[0] = static_cast<int>(indices.size());
    std::vector<float> buf;
    buf.reserve(indices.size() * img);
    std::vector<int> labs;
    labs.reserve(indices.size());
    for (int idx : indices) {
        if (idx < 0 || idx >= size()) throw std::out_of_range("subset: index out of range");
        buf.insert(buf.end(), images.data().begin() + idx * img, images.data().begin() + (idx + 1) * img);
        labs.push_back(labels[idx]);
    }
    return {make_tensor<float>(shape, std::move(buf), false), std::move(labs), num_classes};
}

// ---- CIFAR-10 binary ---------------------------------------------------------

namespace {
constexpr int kCifarRecord = 3073;
constexpr int kCifarPixels = 3072;
}  // namespace

LabeledImages load_cifar10_file(const std::string& path) {
    const auto bytes = binio::read_file(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0)
        throw std::runtime_error(str_cat("cifar10: ", path, " has size ", bytes.size(),
                                         ", not a multiple of ", kCifarRecord));
    const int n = static_cast<int>(bytes.size() / kCifarRecord);
    std::vector<float> img(static_cast<std::size_t>(n) * kCifarPixels);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        const std::uint8_t* rec = bytes.data() + static_cast<std::size_t>(i) * kCifarRecord;
        if (rec[0] > 9)
            throw std::runtime_error(str_cat("cifar10: record ", i, " has label byte ", int(rec[0])));
        labels[i] = rec[0];
        float* dst = img.data() + static_cast<std::size_t>(i) * kCifarPixels;
        for (int j = 0; j < kCifarPixels; ++j) dst[j] = static_cast<float>(rec[1 + j]) / 255.0f;
    }
    return {make_tensor<float>({n, 3, 32, 32}, std::move(img), false), std::move(labels), 10};
}

namespace {

LabeledImages concat(const std::vector<LabeledImages>& parts) {
    int total = 0;
    for (const auto& p : parts) total += p.size();
    Shape shape = parts.front().images.shape();
    const std::int64_t img = static_cast<std::int64_t>(parts.front().images.numel()) / parts.front().size();
    shape[0] = total;
    std::vector<float> buf;
    buf.reserve(static_cast<std::size_t>(total) * img);
    std::vector<int> labels;
    labels.reserve(total);
    for (const auto& p : parts) {
        buf.insert(buf.end(), p.images.data().begin(), p.images.data().end());
        labels.insert(labels.end(), p.labels.begin(), p.labels.end());
    }
    return {make_tensor<float>(shape, std::move(buf), false), std::move(labels), parts.front().num_classes};
}

}  // namespace

std::vector<int> stratified_indices(const std::vector<int>& labels, int num_classes, int count,
                                    std::uint64_t seed, const std::vector<int>& exclude) {
    std::vector<char> used(labels.size(), 0);
    for (int e : exclude) used[e] = 1;
    std::vector<std::vector<int>> by_class(num_classes);
    for (int i = 0; i < static_cast<int>(labels.size()); ++i)
        if (!used[i]) by_class[labels[i]].push_back(i);
    for (int c = 0; c < num_classes; ++c) {
        Rng rng(derive_seed(seed, "stratify", static_cast<std::uint64_t>(c)));
        rng.shuffle(by_class[c]);
    }
    std::vector<int> quota(num_classes, count / num_classes);
    for (int c = 0; c < count % num_classes; ++c) ++quota[c];
    std::vector<int> out;
    out.reserve(count);
    for (int c = 0; c < num_classes; ++c) {
        if (static_cast<int>(by_class[c].size()) < quota[c])
            throw std::runtime_error(str_cat("stratified_indices: class ", c, " has only ",
                                             by_class[c].size(), " records, need ", quota[c]));
        out.insert(out.end(), by_class[c].begin(), by_class[c].begin() + quota[c]);
    }
    std::sort(out.begin(), out.end());
    return out;
}

DatasetSplits load_cifar10(const std::string& path, const SplitSizes& sizes, std::uint64_t seed) {
    LabeledImages train_pool, test_pool;
    if (fs::is_directory(path)) {
        std::vector<LabeledImages> parts;
        for (int b = 1; b <= 5; ++b) {
            const std::string f = (fs::path(path) / str_cat("data_batch_", b, ".bin")).string();
            if (fs::exists(f)) parts.push_back(load_cifar10_file(f));
        }
        if (parts.empty()) throw std::runtime_error("cifar10: no data_batch_*.bin under " + path);
        train_pool = concat(parts);
        const std::string tf = (fs::path(path) / "test_batch.bin").string();
        test_pool = fs::exists(tf) ? load_cifar10_file(tf) : train_pool;
    } else {
        train_pool = load_cifar10_file(path);
        test_pool = train_pool;
    }

    const auto train_idx = stratified_indices(train_pool.labels, 10, sizes.train,
                                              derive_seed(seed, "split.train"));
    const auto val_idx = stratified_indices(train_pool.labels, 10, sizes.val,
                                            derive_seed(seed, "split.val"), train_idx);
    std::vector<int> test_exclude;
    if (test_pool.images.impl() == train_pool.images.impl()) {
        test_exclude = train_idx;
        test_exclude.insert(test_exclude.end(), val_idx.begin(), val_idx.end());
    }
    const auto test_idx = stratified_indices(test_pool.labels, 10, sizes.test,
                                             derive_seed(seed, "split.test"), test_exclude);
    return {train_pool.subset(train_idx), train_pool.subset(val_idx), test_pool.subset(test_idx)};
}

// ---- synthetic shapes ----------------------------------------------------------

namespace {

constexpr int kSynSize = 32;

float smoothstep01(float t) {
    t = t < 0 ? 0 : (t > 1 ? 1 : t);
    return t * t * (3.0f - 2.0f * t);
}

// Edge coverage from a signed distance (negative inside), ~1px soft edge.
float coverage(float sdf) { return smoothstep01(0.5f - sdf); }

float sdf_disk(float x, float y, float cx, float cy, float r) {
    return std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) - r;
}

float sdf_box(float x, float y, float cx, float cy, float hx, float hy) {
    const float dx = std::abs(x - cx) - hx;
    const float dy = std::abs(y - cy) - hy;
    const float ox = dx > 0 ? dx : 0, oy = dy > 0 ? dy : 0;
    const float outside = std::sqrt(ox * ox + oy * oy);
    const float inside = std::min(std::max(dx, dy), 0.0f);
    return outside + inside;
}

struct ShapeParams {
    int shape_cls;        // geometry: 0 disk, 1 square, 2 cross
    int tint_ch;          // channel boosted by tint; -1 = achromatic
    float cx, cy, size;
    float fg_lum;         // foreground luminance
    float tint;           // class-channel color boost
    float bg_base;
    float noise_sigma;
};

float shape_sdf(const ShapeParams& p, float x, float y) {
    switch (p.shape_cls) {
        case 0:  // disk
            return sdf_disk(x, y, p.cx, p.cy, p.size);
        case 1:  // square
            return sdf_box(x, y, p.cx, p.cy, 0.9f * p.size, 0.9f * p.size);
        default: {  // cross: union of two bars
            const float arm = 0.42f * p.size;
            const float h = sdf_box(x, y, p.cx, p.cy, 1.1f * p.size, arm);
            const float v = sdf_box(x, y, p.cx, p.cy, arm, 1.1f * p.size);
            return std::min(h, v);
        }
    }
}

void render_shape(float* img, const ShapeParams& p, Rng& rng) {
    float fg[3];
    for (int ch = 0; ch < 3; ++ch) {
        const float boost = (ch == p.tint_ch) ? 1.0f + p.tint : 1.0f - 0.5f * p.tint;
        fg[ch] = clamp01f(p.fg_lum * boost);
    }
    for (int y = 0; y < kSynSize; ++y) {
        for (int x = 0; x < kSynSize; ++x) {
            const float a = coverage(shape_sdf(p, static_cast<float>(x), static_cast<float>(y)));
            for (int ch = 0; ch < 3; ++ch) {
                const float bg = p.bg_base + static_cast<float>(rng.normal(0.0, p.noise_sigma));
                const float v = bg + a * (fg[ch] - bg);
                img[(ch * kSynSize + y) * kSynSize + x] = clamp01f(v);
            }
        }
    }
}

}  // namespace

LabeledImages synthetic_shapes(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synthetic_shapes: n must be >= 1");
    std::vector<float> img(static_cast<std::size_t>(n) * 3 * kSynSize * kSynSize);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "shapes", static_cast<std::uint64_t>(i)));
        ShapeParams p;
        const int cls = i % 3;
        // Cue mode cycles per class block so every split stays balanced:
        // half the images carry both cues, a quarter are shape-only (gray
        // figure), a quarter are color-only (neutral disk, tint carries the
        // class). No single cue survives every corruption family.
        const int mode = (i / 3) % 4;
        p.cx = 16.0f + static_cast<float>(rng.uniform(-4.0, 4.0));
        p.cy = 16.0f + static_cast<float>(rng.uniform(-4.0, 4.0));
        p.size = static_cast<float>(rng.uniform(5.5, 9.5));
        p.bg_base = static_cast<float>(rng.uniform(0.25, 0.45));
        p.noise_sigma = 0.06f;
        p.fg_lum = p.bg_base + static_cast<float>(rng.uniform(0.25, 0.50));
        if (mode == 2) {
            p.shape_cls = cls;
            p.tint_ch = -1;
            p.tint = 0.0f;
        } else if (mode == 3) {
            p.shape_cls = 0;
            p.tint_ch = cls;
            p.tint = static_cast<float>(rng.uniform(0.35, 0.60));
        } else {
            p.shape_cls = cls;
            p.tint_ch = cls;
            p.tint = static_cast<float>(rng.uniform(0.25, 0.55));
        }
        labels[i] = cls;
        render_shape(img.data() + static_cast<std::size_t>(i) * 3 * kSynSize * kSynSize, p, rng);
    }
    return {make_tensor<float>({n, 3, kSynSize, kSynSize}, std::move(img), false), std::move(labels), 3};
}

LabeledImages synthetic_shapes_easy(int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synthetic_shapes_easy: n must be >= 1");
    std::vector<float> img(static_cast<std::size_t>(n) * 3 * kSynSize * kSynSize);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "shapes.easy", static_cast<std::uint64_t>(i)));
        ShapeParams p;
        p.shape_cls = i % 2;
        p.tint_ch = -1;
        p.cx = 16.0f;
        p.cy = 16.0f;
        p.size = 8.0f;
        p.bg_base = 0.15f;
        p.noise_sigma = 0.02f;
        p.fg_lum = 0.85f;
        p.tint = 0.0f;
        labels[i] = p.shape_cls;
        render_shape(img.data() + static_cast<std::size_t>(i) * 3 * kSynSize * kSynSize, p, rng);
    }
    return {make_tensor<float>({n, 3, kSynSize, kSynSize}, std::move(img), false), std::move(labels), 2};
}

DatasetSplits synthetic_splits(const SplitSizes& sizes, std::uint64_t seed) {
    DatasetSplits out;
    out.train = synthetic_shapes(sizes.train, derive_seed(seed, "syn.train"));
    out.val = synthetic_shapes(sizes.val, derive_seed(seed, "syn.val"));
    out.test = synthetic_shapes(sizes.test, derive_seed(seed, "syn.test"));
    return out;
}

// ---- raw tensor files -----------------------------------------------------------

namespace {
constexpr char kRawMagic[4] = {'N', 'P', 'T', 'T'};
}

void save_raw_tensor(const std::string& path, const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kRawMagic, kRawMagic + 4);
    binio::put_u8(out, 0);  // f32
    binio::put_u8(out, static_cast<std::uint8_t>(t.shape().size()));
    for (int d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) binio::put_f32(out, v);
    binio::write_file(path, out);
}

Tensor load_raw_tensor(const std::string& path) {
    const auto bytes = binio::read_file(path);
    binio::Reader r(bytes.data(), bytes.size());
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kRawMagic, 4) != 0)
        throw std::runtime_error("raw tensor: bad magic in " + path);
    if (r.u8() != 0) throw std::runtime_error("raw tensor: expected f32 dtype in " + path);
    const int rank = r.u8();
    Shape shape(rank);
    for (int& d : shape) d = static_cast<int>(r.u32());
    std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
    for (float& v : data) v = r.f32();
    return make_tensor<float>(std::move(shape), std::move(data), false);
}

void save_raw_labels(const std::string& path, const std::vector<int>& labels) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kRawMagic, kRawMagic + 4);
    binio::put_u8(out, 1);  // i32
    binio::put_u8(out, 1);
    binio::put_u32(out, static_cast<std::uint32_t>(labels.size()));
    for (int v : labels) binio::put_u32(out, static_cast<std::uint32_t>(v));
    binio::write_file(path, out);
}

std::vector<int> load_raw_labels(const std::string& path) {
    const auto bytes = binio::read_file(path);
    binio::Reader r(bytes.data(), bytes.size());
    char magic[4];
    for (char& c : magic) c = static_cast<char>(r.u8());
    if (std::memcmp(magic, kRawMagic, 4) != 0)
        throw std::runtime_error("raw labels: bad magic in " + path);
    if (r.u8() != 1) throw std::runtime_error("raw labels: expected i32 dtype in " + path);
    if (r.u8() != 1) throw std::runtime_error("raw labels: expected rank 1 in " + path);
    std::vector<int> labels(r.u32());
    for (int& v : labels) v = static_cast<int>(r.u32());
    return labels;
}

LabeledImages load_raw_dir(const std::string& dir, int num_classes) {
    LabeledImages out;
    out.images = load_raw_tensor((fs::path(dir) / "images.nptt").string());
    out.labels = load_raw_labels((fs::path(dir) / "labels.nptt").string());
    out.num_classes = num_classes;
    if (out.images.shape().size() != 4 || out.size() != static_cast<int>(out.labels.size()))
        throw std::runtime_error("raw dir: images/labels mismatch in " + dir);
    return out;
}

void save_raw_dir(const std::string& dir, const LabeledImages& data) {
    fs::create_directories(dir);
    save_raw_tensor((fs::path(dir) / "images.nptt").string(), data.images);
    save_raw_labels((fs::path(dir) / "labels.nptt").string(), data.labels);
}

}  // namespace npt
