#include "dprf/flat_index.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

static_assert(std::endian::native == std::endian::little,
              "index format is little-endian; big-endian hosts unsupported");

namespace dprf {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'R', 'F', 'I', 'D', 'X', '1'};

std::uint32_t crc_of(const std::string& bytes) {
    return static_cast<std::uint32_t>(
        ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

template <typename T>
void append_raw(std::string& out, const T& v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw IndexError("index file truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}

}  // namespace

FlatIndex FlatIndex::build(const std::vector<std::pair<std::string, EmbeddingVector>>& embeddings) {
    if (embeddings.empty()) throw IndexError("build: empty embedding list");
    FlatIndex idx;
    idx.dim_ = embeddings.front().second.size();
    if (idx.dim_ == 0) throw IndexError("build: zero-dimensional embedding");
    idx.doc_ids_.reserve(embeddings.size());
    idx.matrix_.reserve(embeddings.size() * idx.dim_);
    for (const auto& [id, vec] : embeddings) {
        if (vec.size() != idx.dim_)
            throw IndexError("build: dimension mismatch for doc '" + id + "'");
        for (double v : vec) {
            if (!std::isfinite(v))
                throw IndexError("build: non-finite value in doc '" + id + "'");
            idx.matrix_.push_back(static_cast<float>(v));
        }
        idx.doc_ids_.push_back(id);
    }
    idx.id_lookup_.reserve(idx.doc_ids_.size());
    for (std::size_t i = 0; i < idx.doc_ids_.size(); ++i)
        idx.id_lookup_.emplace_back(idx.doc_ids_[i], i);
    std::sort(idx.id_lookup_.begin(), idx.id_lookup_.end());
    for (std::size_t i = 1; i < idx.id_lookup_.size(); ++i)
        if (idx.id_lookup_[i].first == idx.id_lookup_[i - 1].first)
            throw IndexError("build: duplicate doc id '" + idx.id_lookup_[i].first + "'");
    return idx;
}

std::vector<ScoredHit> FlatIndex::search(std::span<const double> query, std::size_t top_k) const {
    if (query.size() != dim_)
        throw IndexError("search: query dim " + std::to_string(query.size()) +
                         " != index dim " + std::to_string(dim_));
    if (top_k < 1) throw IndexError("search: top_k must be >= 1");

    const std::size_t n = size();
    std::vector<double> scores(n);
    const float* m = matrix_.data();
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = m + i * dim_;
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) acc += static_cast<double>(row[j]) * query[j];
        scores[i] = acc;
    }

    const std::size_t k = std::min(top_k, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return doc_ids_[a] < doc_ids_[b];
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), better);

    std::vector<ScoredHit> hits;
    hits.reserve(k);
    for (std::size_t r = 0; r < k; ++r)
        hits.push_back({doc_ids_[order[r]], scores[order[r]], static_cast<int>(r + 1)});
    return hits;
}

bool FlatIndex::contains(const std::string& doc_id) const {
    auto it = std::lower_bound(id_lookup_.begin(), id_lookup_.end(),
                               std::make_pair(doc_id, std::size_t{0}));
    return it != id_lookup_.end() && it->first == doc_id;
}

std::size_t FlatIndex::row_of(const std::string& doc_id) const {
    auto it = std::lower_bound(id_lookup_.begin(), id_lookup_.end(),
                               std::make_pair(doc_id, std::size_t{0}));
    if (it == id_lookup_.end() || it->first != doc_id)
        throw IndexError("unknown doc id '" + doc_id + "'");
    return it->second;
}

EmbeddingVector FlatIndex::embedding(const std::string& doc_id) const {
    const std::size_t r = row_of(doc_id);
    EmbeddingVector out(dim_);
    const float* row = matrix_.data() + r * dim_;
    for (std::size_t j = 0; j < dim_; ++j) out[j] = static_cast<double>(row[j]);
    return out;
}

void FlatIndex::save(const std::string& path) const {
    std::string buf;
    buf.reserve(16 + matrix_.size() * 4 + doc_ids_.size() * 16);
    buf.append(kMagic, sizeof(kMagic));
    append_raw(buf, static_cast<std::uint64_t>(dim_));
    append_raw(buf, static_cast<std::uint64_t>(size()));
    buf.append(reinterpret_cast<const char*>(matrix_.data()), matrix_.size() * sizeof(float));
    for (const auto& id : doc_ids_) {
        append_raw(buf, static_cast<std::uint32_t>(id.size()));
        buf.append(id);
    }
    const std::uint32_t crc = crc_of(buf);
    append_raw(buf, crc);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IndexError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IndexError("write failed for '" + path + "'");
}

FlatIndex FlatIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IndexError("cannot open '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < sizeof(kMagic) + 16 + 4) throw IndexError("index file truncated");
    if (std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw IndexError("bad magic: not an index file");

    const std::string body = buf.substr(0, buf.size() - 4);
    std::size_t off = buf.size() - 4;
    const std::uint32_t stored_crc = read_raw<std::uint32_t>(buf, off);
    if (crc_of(body) != stored_crc) throw IndexError("checksum mismatch: corrupt index");

    off = sizeof(kMagic);
    const auto dim = read_raw<std::uint64_t>(body, off);
    const auto count = read_raw<std::uint64_t>(body, off);

    FlatIndex idx;
    idx.dim_ = static_cast<std::size_t>(dim);
    idx.matrix_.resize(static_cast<std::size_t>(dim * count));
    if (off + idx.matrix_.size() * sizeof(float) > body.size())
        throw IndexError("index file truncated");
    std::memcpy(idx.matrix_.data(), body.data() + off, idx.matrix_.size() * sizeof(float));
    off += idx.matrix_.size() * sizeof(float);

    idx.doc_ids_.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = read_raw<std::uint32_t>(body, off);
        if (off + len > body.size()) throw IndexError("index file truncated");
        idx.doc_ids_.emplace_back(body.data() + off, len);
        off += len;
    }
    if (off != body.size()) throw IndexError("trailing bytes in index file");

    for (float v : idx.matrix_)
        if (!std::isfinite(v)) throw IndexError("non-finite value in index file");

    idx.id_lookup_.reserve(idx.doc_ids_.size());
    for (std::size_t i = 0; i < idx.doc_ids_.size(); ++i)
        idx.id_lookup_.emplace_back(idx.doc_ids_[i], i);
    std::sort(idx.id_lookup_.begin(), idx.id_lookup_.end());
    return idx;
}

}  // namespace dprf
