#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "bpn/matrix.hpp"
#include "bpn/memory.hpp" // TaskId

namespace bpn {

/// A loaded dataset. Image loaders scale raw bytes by 1/255, so features of
/// image data live in [0, 1]; the toy cluster generator produces raw plane
/// coordinates. Rows [0, train_count) are the source's native training
/// split, the rest its test split.
struct Dataset {
    Matrix features; ///< n x d
    std::vector<std::int32_t> labels;
    std::vector<std::int32_t> coarse_labels; ///< CIFAR-100 only, kept for byte round-trips
    std::size_t class_count = 0;
    std::string name;
    std::size_t train_count = 0;

    std::size_t size() const { return features.rows(); }
};

/// One task of a sequence: a class subset plus the example rows (into the
/// owning Dataset) used for training and testing it.
struct TaskSpec {
    TaskId id = 0;
    std::vector<std::int32_t> classes;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_indices;
};

/// Copy the selected rows into a dense batch.
inline Matrix gather_rows(const Matrix& src, const std::vector<std::size_t>& idx,
                          std::size_t begin, std::size_t end) {
    Matrix out(end - begin, src.cols());
    for (std::size_t i = begin; i < end; ++i)
        std::copy(src.row(idx[i]), src.row(idx[i]) + src.cols(), out.row(i - begin));
    return out;
}

inline std::vector<std::int32_t> gather_labels(const std::vector<std::int32_t>& labels,
                                               const std::vector<std::size_t>& idx,
                                               std::size_t begin, std::size_t end) {
    std::vector<std::int32_t> out(end - begin);
    for (std::size_t i = begin; i < end; ++i) out[i - begin] = labels[idx[i]];
    return out;
}

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open file: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    return bytes;
}

inline bool looks_gzip(const std::vector<unsigned char>& b) {
    return b.size() >= 2 && b[0] == 0x1f && b[1] == 0x8b;
}

inline std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in,
                                         const std::string& source) {
    z_stream strm{};
    if (inflateInit2(&strm, 15 + 32) != Z_OK) throw IoError("zlib init failed: " + source);
    std::vector<unsigned char> out;
    std::array<unsigned char, 1 << 16> buf;
    strm.next_in = const_cast<unsigned char*>(in.data());
    strm.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        strm.next_out = buf.data();
        strm.avail_out = static_cast<uInt>(buf.size());
        rc = inflate(&strm, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&strm);
            throw FormatError("corrupt gzip stream in " + source);
        }
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
    }
    inflateEnd(&strm);
    return out;
}

/// gzip-compress (used to build compressed fixtures).
inline std::vector<unsigned char> gzip_bytes(const std::vector<unsigned char>& in) {
    z_stream strm{};
    if (deflateInit2(&strm, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8,
                     Z_DEFAULT_STRATEGY) != Z_OK)
        throw IoError("zlib deflate init failed");
    std::vector<unsigned char> out;
    std::array<unsigned char, 1 << 16> buf;
    strm.next_in = const_cast<unsigned char*>(in.data());
    strm.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    do {
        strm.next_out = buf.data();
        strm.avail_out = static_cast<uInt>(buf.size());
        rc = deflate(&strm, Z_FINISH);
        out.insert(out.end(), buf.data(), buf.data() + (buf.size() - strm.avail_out));
    } while (rc != Z_STREAM_END);
    deflateEnd(&strm);
    return out;
}

/// Read a file, transparently decompressing when the gzip magic is present.
inline std::vector<unsigned char> read_maybe_gzip(const std::string& path) {
    std::vector<unsigned char> bytes = read_file_bytes(path);
    if (looks_gzip(bytes)) return gunzip(bytes, path);
    return bytes;
}

inline std::uint32_t read_be_u32(const std::vector<unsigned char>& b, std::size_t off,
                                 const std::string& source) {
    if (b.size() < off + 4)
        throw FormatError(source + ": truncated at byte offset " + std::to_string(b.size()));
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

inline void put_be_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    b.push_back(static_cast<unsigned char>(v >> 24));
    b.push_back(static_cast<unsigned char>(v >> 16));
    b.push_back(static_cast<unsigned char>(v >> 8));
    b.push_back(static_cast<unsigned char>(v));
}

inline unsigned char byte_from_unit(double f) {
    long v = std::lround(f * 255.0);
    if (v < 0) v = 0;
    if (v > 255) v = 255;
    return static_cast<unsigned char>(v);
}

} // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct IdxImages {
    Matrix features; ///< n x (rows*cols), scaled by 1/255
    std::size_t img_rows = 0;
    std::size_t img_cols = 0;
};

inline IdxImages parse_idx_images(const std::vector<unsigned char>& b,
                                  const std::string& source) {
    using detail::read_be_u32;
    const std::uint32_t magic = read_be_u32(b, 0, source);
    if (magic != kIdxImageMagic)
        throw FormatError(source + ": bad image magic 0x" + std::to_string(magic) +
                          " at byte offset 0");
    const std::size_t n = read_be_u32(b, 4, source);
    const std::size_t rows = read_be_u32(b, 8, source);
    const std::size_t cols = read_be_u32(b, 12, source);
    const std::size_t want = 16 + n * rows * cols;
    if (b.size() != want)
        throw FormatError(source + ": payload is " + std::to_string(b.size()) +
                          " bytes, header implies " + std::to_string(want) +
                          " (mismatch at byte offset " + std::to_string(std::min(b.size(), want)) +
                          ")");
    IdxImages out;
    out.img_rows = rows;
    out.img_cols = cols;
    out.features = Matrix(n, rows * cols);
    const double scale = 1.0 / 255.0;
    for (std::size_t i = 0; i < n * rows * cols; ++i)
        out.features.data()[i] = static_cast<double>(b[16 + i]) * scale;
    return out;
}

inline std::vector<std::int32_t> parse_idx_labels(const std::vector<unsigned char>& b,
                                                  const std::string& source) {
    using detail::read_be_u32;
    const std::uint32_t magic = read_be_u32(b, 0, source);
    if (magic != kIdxLabelMagic)
        throw FormatError(source + ": bad label magic 0x" + std::to_string(magic) +
                          " at byte offset 0");
    const std::size_t n = read_be_u32(b, 4, source);
    const std::size_t want = 8 + n;
    if (b.size() != want)
        throw FormatError(source + ": payload is " + std::to_string(b.size()) +
                          " bytes, header implies " + std::to_string(want) +
                          " (mismatch at byte offset " + std::to_string(std::min(b.size(), want)) +
                          ")");
    std::vector<std::int32_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = b[8 + i];
    return labels;
}

/// Load one MNIST-format image/label file pair (plain or gzipped).
inline Dataset load_mnist_idx(const std::string& image_path, const std::string& label_path) {
    const auto img_bytes = detail::read_maybe_gzip(image_path);
    const auto lbl_bytes = detail::read_maybe_gzip(label_path);
    IdxImages img = parse_idx_images(img_bytes, image_path);
    std::vector<std::int32_t> labels = parse_idx_labels(lbl_bytes, label_path);
    if (img.features.rows() != labels.size())
        throw FormatError("IDX count mismatch: " + image_path + " has " +
                          std::to_string(img.features.rows()) + " images, " + label_path +
                          " has " + std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] > 9)
            throw FormatError(label_path + ": label " + std::to_string(labels[i]) +
                              " out of range at byte offset " + std::to_string(8 + i));
    Dataset ds;
    ds.features = std::move(img.features);
    ds.labels = std::move(labels);
    ds.class_count = 10;
    ds.name = "mnist";
    ds.train_count = ds.size();
    return ds;
}

/// Re-serialize to the IDX byte formats (exact inverse of the loader).
inline std::vector<unsigned char> to_idx_image_bytes(const Matrix& features,
                                                     std::size_t img_rows,
                                                     std::size_t img_cols) {
    if (features.cols() != img_rows * img_cols)
        throw ShapeError("to_idx_image_bytes: features " + features.shape_str() + " vs " +
                         std::to_string(img_rows) + "x" + std::to_string(img_cols) + " images");
    std::vector<unsigned char> b;
    b.reserve(16 + features.size());
    detail::put_be_u32(b, kIdxImageMagic);
    detail::put_be_u32(b, static_cast<std::uint32_t>(features.rows()));
    detail::put_be_u32(b, static_cast<std::uint32_t>(img_rows));
    detail::put_be_u32(b, static_cast<std::uint32_t>(img_cols));
    for (std::size_t i = 0; i < features.size(); ++i)
        b.push_back(detail::byte_from_unit(features.data()[i]));
    return b;
}

inline std::vector<unsigned char> to_idx_label_bytes(const std::vector<std::int32_t>& labels) {
    std::vector<unsigned char> b;
    b.reserve(8 + labels.size());
    detail::put_be_u32(b, kIdxLabelMagic);
    detail::put_be_u32(b, static_cast<std::uint32_t>(labels.size()));
    for (std::int32_t l : labels) b.push_back(static_cast<unsigned char>(l));
    return b;
}

enum class CifarVariant { Cifar10, Cifar100 };

/// Load CIFAR binary batch files. CIFAR-10 records are 1 label byte + 3072
/// pixel bytes; CIFAR-100 records carry a coarse and a fine label byte and
/// classification uses the fine one.
inline Dataset load_cifar(CifarVariant variant, const std::vector<std::string>& paths) {
    const std::size_t pixels = 3072;
    const std::size_t record = (variant == CifarVariant::Cifar10) ? pixels + 1 : pixels + 2;
    const std::size_t n_classes = (variant == CifarVariant::Cifar10) ? 10 : 100;

    std::vector<std::vector<unsigned char>> files;
    std::size_t total = 0;
    for (const auto& p : paths) {
        files.push_back(detail::read_maybe_gzip(p));
        if (files.back().size() % record != 0)
            throw FormatError(p + ": length " + std::to_string(files.back().size()) +
                              " is not a multiple of the record size " + std::to_string(record));
        total += files.back().size() / record;
    }

    Dataset ds;
    ds.features = Matrix(total, pixels);
    ds.labels.resize(total);
    if (variant == CifarVariant::Cifar100) ds.coarse_labels.resize(total);
    ds.class_count = n_classes;
    ds.name = (variant == CifarVariant::Cifar10) ? "cifar10" : "cifar100";

    const double scale = 1.0 / 255.0;
    std::size_t row = 0;
    for (std::size_t f = 0; f < files.size(); ++f) {
        const auto& b = files[f];
        for (std::size_t off = 0; off + record <= b.size(); off += record, ++row) {
            std::size_t p = off;
            if (variant == CifarVariant::Cifar100) {
                const unsigned char coarse = b[p++];
                if (coarse >= 20)
                    throw FormatError(paths[f] + ": coarse label " + std::to_string(coarse) +
                                      " out of range at byte offset " + std::to_string(off));
                ds.coarse_labels[row] = coarse;
            }
            const unsigned char fine = b[p++];
            if (fine >= n_classes)
                throw FormatError(paths[f] + ": label " + std::to_string(fine) +
                                  " out of range at byte offset " + std::to_string(p - 1));
            ds.labels[row] = fine;
            double* dst = ds.features.row(row);
            for (std::size_t k = 0; k < pixels; ++k)
                dst[k] = static_cast<double>(b[p + k]) * scale;
        }
    }
    ds.train_count = ds.size();
    return ds;
}

/// Re-serialize rows [begin, end) to the CIFAR binary record format.
inline std::vector<unsigned char> to_cifar_bytes(const Dataset& ds, CifarVariant variant,
                                                 std::size_t begin, std::size_t end) {
    const bool c100 = (variant == CifarVariant::Cifar100);
    std::vector<unsigned char> b;
    b.reserve((end - begin) * (c100 ? 3074 : 3073));
    for (std::size_t i = begin; i < end; ++i) {
        if (c100) b.push_back(static_cast<unsigned char>(ds.coarse_labels[i]));
        b.push_back(static_cast<unsigned char>(ds.labels[i]));
        const double* src = ds.features.row(i);
        for (std::size_t k = 0; k < ds.features.cols(); ++k)
            b.push_back(detail::byte_from_unit(src[k]));
    }
    return b;
}

/// Stack a native train split on top of a native test split.
inline Dataset combine_train_test(Dataset train, const Dataset& test) {
    if (train.features.cols() != test.features.cols() || train.class_count != test.class_count)
        throw InputError("combine_train_test: incompatible datasets " + train.name + " / " +
                         test.name);
    Dataset ds = std::move(train);
    ds.train_count = ds.size();
    Matrix merged(ds.features.rows() + test.features.rows(), ds.features.cols());
    std::copy(ds.features.data(), ds.features.data() + ds.features.size(), merged.data());
    std::copy(test.features.data(), test.features.data() + test.features.size(),
              merged.data() + ds.features.size());
    ds.features = std::move(merged);
    ds.labels.insert(ds.labels.end(), test.labels.begin(), test.labels.end());
    ds.coarse_labels.insert(ds.coarse_labels.end(), test.coarse_labels.begin(),
                            test.coarse_labels.end());
    return ds;
}

/// Partition the dataset's classes into consecutive disjoint tasks. With
/// max_tasks > 0 only the first max_tasks * classes_per_task classes are
/// used (in index order). Optional per-class subsampling of the training
/// rows keeps desk-scale runs fast; selection is deterministic in the seed.
inline std::vector<TaskSpec> split_incremental(const Dataset& ds, std::size_t classes_per_task,
                                               std::size_t subsample_per_class,
                                               std::uint64_t seed, std::size_t max_tasks = 0) {
    if (classes_per_task == 0) throw ConfigError("split_incremental: classes_per_task == 0");
    std::size_t n_tasks;
    if (max_tasks > 0) {
        n_tasks = max_tasks;
        if (n_tasks * classes_per_task > ds.class_count)
            throw ConfigError("split_incremental: " + std::to_string(n_tasks) + " tasks x " +
                              std::to_string(classes_per_task) + " classes exceed " +
                              std::to_string(ds.class_count) + " available classes");
    } else {
        if (ds.class_count % classes_per_task != 0)
            throw ConfigError("split_incremental: class count " +
                              std::to_string(ds.class_count) + " not divisible by " +
                              std::to_string(classes_per_task));
        n_tasks = ds.class_count / classes_per_task;
    }

    // per-class train rows, in row order
    std::vector<std::vector<std::size_t>> per_class_train(ds.class_count);
    for (std::size_t i = 0; i < ds.train_count; ++i)
        per_class_train[static_cast<std::size_t>(ds.labels[i])].push_back(i);

    std::vector<TaskSpec> tasks;
    for (std::size_t t = 0; t < n_tasks; ++t) {
        TaskSpec spec;
        spec.id = static_cast<TaskId>(t);
        for (std::size_t c = 0; c < classes_per_task; ++c)
            spec.classes.push_back(static_cast<std::int32_t>(t * classes_per_task + c));
        for (std::int32_t c : spec.classes) {
            auto rows = per_class_train[static_cast<std::size_t>(c)];
            if (subsample_per_class > 0 && rows.size() > subsample_per_class) {
                Rng rng = split_rng(seed, 0x737562ULL /*"sub"*/,
                                    static_cast<std::uint64_t>(c));
                rng.shuffle(rows);
                rows.resize(subsample_per_class);
                std::sort(rows.begin(), rows.end());
            }
            spec.train_indices.insert(spec.train_indices.end(), rows.begin(), rows.end());
        }
        std::sort(spec.train_indices.begin(), spec.train_indices.end());
        for (std::size_t i = ds.train_count; i < ds.size(); ++i) {
            const std::int32_t l = ds.labels[i];
            if (l >= spec.classes.front() && l <= spec.classes.back())
                spec.test_indices.push_back(i);
        }
        tasks.push_back(std::move(spec));
    }
    return tasks;
}

/// Geometry of the synthetic cluster problem: isotropic Gaussians around the
/// given means.
struct ClusterSpec {
    std::vector<std::array<double, 2>> means = {{0.0, 0.0}, {4.0, 0.0}, {0.0, 4.0}};
    double stddev = 0.7;
    std::size_t points_per_cluster = 500;
    std::uint64_t seed = 1;

    void validate() const {
        if (means.size() < 2) throw ConfigError("ClusterSpec: need at least 2 clusters");
        if (stddev <= 0.0) throw ConfigError("ClusterSpec: stddev must be > 0");
        if (points_per_cluster < 5) throw ConfigError("ClusterSpec: too few points per cluster");
    }
};

struct ClusterData {
    Dataset dataset;
    std::vector<TaskSpec> tasks; ///< task 0: classes {0,1}; task 1: classes {0,2}
};

/// The two-task cluster problem: class 0 is shared by both tasks, task 0
/// separates it from class 1, task 1 from class 2. Each cluster gets a
/// deterministic 80/20 train/test split.
inline ClusterData gen_clusters(const ClusterSpec& spec) {
    spec.validate();
    const std::size_t n_clusters = spec.means.size();
    const std::size_t per = spec.points_per_cluster;
    const std::size_t train_per = (per * 8) / 10;

    ClusterData out;
    Dataset& ds = out.dataset;
    ds.name = "toy";
    ds.class_count = n_clusters;
    ds.features = Matrix(n_clusters * per, 2);
    ds.labels.resize(n_clusters * per);
    ds.train_count = n_clusters * train_per;

    // train rows of every cluster first, then test rows, so train_count is a
    // clean boundary
    std::size_t train_row = 0, test_row = ds.train_count;
    for (std::size_t c = 0; c < n_clusters; ++c) {
        Rng rng = split_rng(spec.seed, 0x636c7573ULL /*"clus"*/, c);
        for (std::size_t i = 0; i < per; ++i) {
            const double x = spec.means[c][0] + spec.stddev * rng.next_gaussian();
            const double y = spec.means[c][1] + spec.stddev * rng.next_gaussian();
            const std::size_t row = (i < train_per) ? train_row++ : test_row++;
            ds.features(row, 0) = x;
            ds.features(row, 1) = y;
            ds.labels[row] = static_cast<std::int32_t>(c);
        }
    }

    const auto make_task = [&](TaskId id, std::int32_t a, std::int32_t b) {
        TaskSpec t;
        t.id = id;
        t.classes = {a, b};
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == a || ds.labels[i] == b)
                (i < ds.train_count ? t.train_indices : t.test_indices).push_back(i);
        return t;
    };
    out.tasks.push_back(make_task(0, 0, 1));
    if (n_clusters >= 3) out.tasks.push_back(make_task(1, 0, 2));
    return out;
}

} // namespace bpn
