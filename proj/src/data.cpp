#include "mmmt/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "mmmt/error.hpp"
#include "mmmt/rng.hpp"

namespace mmmt {

static_assert(std::endian::native == std::endian::little, "feature files are read and written on little-endian hosts");

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

class ByteWriter {
public:
    template <typename T>
    void put(T v) {
        unsigned char buf[sizeof(T)];
        std::memcpy(buf, &v, sizeof(T));
        bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
    }
    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    std::vector<unsigned char> take() { return std::move(bytes_); }

private:
    std::vector<unsigned char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    template <typename T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    std::string get_string(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void get_floats(std::vector<float>& out, std::size_t n, const char* what) {
        need(n * sizeof(float), what);
        out.resize(n);
        std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
        pos_ += n * sizeof(float);
    }
    std::size_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated feature file while reading ") + what, pos_);
        }
    }

    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

constexpr std::uint32_t kFeatureVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// Schema

int schema_classes(Head head) {
    switch (head) {
        case Head::sentiment: return 3;
        case Head::humour:
        case Head::sarcasm:
        case Head::offensive: return 4;
        case Head::motivation: return 2;
    }
    return 0;
}

std::string_view head_name(Head head) {
    switch (head) {
        case Head::sentiment: return "sentiment";
        case Head::humour: return "humour";
        case Head::sarcasm: return "sarcasm";
        case Head::offensive: return "offensive";
        case Head::motivation: return "motivation";
    }
    return "?";
}

Head parse_head(std::string_view name) {
    name = trim(name);
    for (Head h : kAllHeads) {
        if (head_name(h) == name) return h;
    }
    if (name == "humor") return Head::humour;
    if (name == "offensiveness") return Head::offensive;
    throw ConfigError("unknown head '" + std::string(name) + "'");
}

HeadMask HeadMask::parse(std::string_view csv) {
    if (trim(csv) == "all") return all();
    HeadMask m;
    for (auto part : split(csv, ',')) {
        if (trim(part).empty()) continue;
        m.set(parse_head(part));
    }
    if (m.empty()) throw ConfigError("head mask must name at least one head");
    return m;
}

std::vector<Head> HeadMask::heads() const {
    std::vector<Head> out;
    for (Head h : kAllHeads) {
        if (contains(h)) out.push_back(h);
    }
    return out;
}

std::string HeadMask::to_string() const {
    std::string out;
    for (Head h : heads()) {
        if (!out.empty()) out += ',';
        out += head_name(h);
    }
    return out;
}

void LabelSet::validate(const std::string& record_id) const {
    for (Head h : kAllHeads) {
        const int v = (*this)[h];
        if (v == kAbsent) continue;
        if (v < 0 || v >= schema_classes(h)) {
            throw LabelError("record '" + record_id + "': " + std::string(head_name(h)) + " label " +
                             std::to_string(v) + " outside [0, " + std::to_string(schema_classes(h) - 1) + "]");
        }
    }
}

std::string_view modality_name(Modality m) {
    switch (m) {
        case Modality::image: return "image";
        case Modality::clip: return "clip";
        case Modality::text: return "text";
    }
    return "?";
}

Modality parse_modality(std::string_view name) {
    name = trim(name);
    for (Modality m : kAllModalities) {
        if (modality_name(m) == name) return m;
    }
    throw ConfigError("unknown modality '" + std::string(name) + "'");
}

ModalitySet::ModalitySet(std::vector<Modality> order) : order_(std::move(order)) {
    for (std::size_t i = 0; i < order_.size(); ++i) {
        for (std::size_t j = i + 1; j < order_.size(); ++j) {
            if (order_[i] == order_[j]) {
                throw ConfigError("modality '" + std::string(modality_name(order_[i])) + "' listed twice");
            }
        }
    }
}

ModalitySet ModalitySet::from_bits(std::uint8_t bits) {
    std::vector<Modality> order;
    for (Modality m : kAllModalities) {
        if ((bits >> static_cast<int>(m)) & 1U) order.push_back(m);
    }
    return ModalitySet(std::move(order));
}

ModalitySet ModalitySet::parse(std::string_view csv) {
    if (trim(csv) == "all") return all();
    std::vector<Modality> order;
    for (auto part : split(csv, ',')) {
        if (trim(part).empty()) continue;
        order.push_back(parse_modality(part));
    }
    if (order.empty()) throw ConfigError("modality mask must name at least one modality");
    return ModalitySet(std::move(order));
}

bool ModalitySet::contains(Modality m) const {
    return std::find(order_.begin(), order_.end(), m) != order_.end();
}

std::uint8_t ModalitySet::bits() const {
    std::uint8_t b = 0;
    for (Modality m : order_) b |= static_cast<std::uint8_t>(1U << static_cast<int>(m));
    return b;
}

std::string ModalitySet::to_string() const {
    std::string out;
    for (Modality m : order_) {
        if (!out.empty()) out += ',';
        out += modality_name(m);
    }
    return out;
}

std::uint32_t FeatureDims::operator[](Modality m) const {
    switch (m) {
        case Modality::image: return image;
        case Modality::clip: return clip;
        case Modality::text: return text;
    }
    return 0;
}

const std::optional<std::vector<float>>& FeatureRecord::vector(Modality m) const {
    switch (m) {
        case Modality::image: return image;
        case Modality::clip: return clip;
        default: return text;
    }
}

std::optional<std::vector<float>>& FeatureRecord::vector(Modality m) {
    switch (m) {
        case Modality::image: return image;
        case Modality::clip: return clip;
        default: return text;
    }
}

// ---------------------------------------------------------------------------
// Feature files

std::vector<unsigned char> encode_feature_file(const FeatureDims& dims, std::span<const FeatureRecord> records) {
    ByteWriter w;
    w.put_bytes("MMF1");
    w.put<std::uint32_t>(kFeatureVersion);
    w.put<std::uint32_t>(dims.image);
    w.put<std::uint32_t>(dims.clip);
    w.put<std::uint32_t>(dims.text);
    w.put<std::uint64_t>(records.size());
    for (const FeatureRecord& r : records) {
        if (r.id.size() > 0xFFFF) throw DataError("record id longer than 65535 bytes: '" + r.id.substr(0, 32) + "...'");
        r.labels.validate(r.id);
        w.put<std::uint16_t>(static_cast<std::uint16_t>(r.id.size()));
        w.put_bytes(r.id);
        std::uint8_t presence = 0;
        for (Modality m : kAllModalities) {
            const auto& v = r.vector(m);
            if (!v) continue;
            if (v->size() != dims[m]) {
                throw DataError("record '" + r.id + "': " + std::string(modality_name(m)) + " vector has " +
                                std::to_string(v->size()) + " values, header says " + std::to_string(dims[m]));
            }
            presence |= static_cast<std::uint8_t>(1U << static_cast<int>(m));
        }
        w.put<std::uint8_t>(presence);
        for (Modality m : kAllModalities) {
            const auto& v = r.vector(m);
            if (!v) continue;
            for (float f : *v) w.put<float>(f);
        }
        for (std::int8_t l : r.labels.values) w.put<std::int8_t>(l);
    }
    return w.take();
}

FeatureFile decode_feature_file(std::span<const unsigned char> bytes) {
    ByteReader r(bytes);
    const std::string magic = r.get_string(4, "magic");
    if (magic != "MMF1") throw FormatError("bad magic, expected \"MMF1\"", 0);
    const auto version_offset = r.offset();
    const auto version = r.get<std::uint32_t>("version");
    if (version != kFeatureVersion) {
        throw FormatError("unsupported feature file version " + std::to_string(version), version_offset);
    }
    FeatureFile file;
    file.dims.image = r.get<std::uint32_t>("image dim");
    file.dims.clip = r.get<std::uint32_t>("clip dim");
    file.dims.text = r.get<std::uint32_t>("text dim");
    const auto count = r.get<std::uint64_t>("record count");
    // Every record needs at least 8 bytes (id length, presence, labels).
    if (count > bytes.size() / 8) {
        throw FormatError("record count " + std::to_string(count) + " exceeds what the file can hold", 24);
    }
    file.records.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        FeatureRecord rec;
        const auto id_len = r.get<std::uint16_t>("record id length");
        rec.id = r.get_string(id_len, "record id");
        const auto presence_offset = r.offset();
        const auto presence = r.get<std::uint8_t>("presence mask");
        if (presence & ~0x07U) {
            throw FormatError("invalid presence mask " + std::to_string(presence), presence_offset);
        }
        for (Modality m : kAllModalities) {
            if (!((presence >> static_cast<int>(m)) & 1U)) continue;
            std::vector<float> v;
            r.get_floats(v, file.dims[m], "feature vector");
            rec.vector(m) = std::move(v);
        }
        const auto label_offset = r.offset();
        for (auto& l : rec.labels.values) l = r.get<std::int8_t>("labels");
        try {
            rec.labels.validate(rec.id);
        } catch (const LabelError& e) {
            throw FormatError(e.what(), label_offset);
        }
        file.records.push_back(std::move(rec));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after last record", r.offset());
    return file;
}

void write_feature_file(const std::filesystem::path& path, const FeatureDims& dims,
                        std::span<const FeatureRecord> records) {
    const auto bytes = encode_feature_file(dims, records);
    write_file_atomic(path, bytes);
}

FeatureFile read_feature_file(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_feature_file(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what(), e.offset());
    }
}

void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw DataError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// Label manifests

std::vector<ManifestRow> read_label_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::string line;
    std::vector<ManifestRow> rows;
    std::size_t line_no = 0;
    std::array<int, 5> column_of{};
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(line, ',');
        if (!have_header) {
            if (fields.size() != 6 || trim(fields[0]) != "id") {
                throw DataError(path.string() + ":" + std::to_string(line_no) +
                                ": expected header id,sentiment,humour,sarcasm,offensive,motivation");
            }
            for (std::size_t c = 1; c < 6; ++c) column_of[static_cast<int>(parse_head(fields[c]))] = static_cast<int>(c);
            have_header = true;
            continue;
        }
        if (fields.size() != 6) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 6 columns, got " +
                            std::to_string(fields.size()));
        }
        ManifestRow row;
        row.id = std::string(trim(fields[0]));
        for (Head h : kAllHeads) {
            const auto f = trim(fields[column_of[static_cast<int>(h)]]);
            if (f.empty()) continue;
            int v = 0;
            try {
                std::size_t used = 0;
                v = std::stoi(std::string(f), &used);
                if (used != f.size()) throw std::invalid_argument("junk");
            } catch (const std::exception&) {
                throw DataError(path.string() + ":" + std::to_string(line_no) + ": bad " +
                                std::string(head_name(h)) + " value '" + std::string(f) + "'");
            }
            if (v < -1 || v > 127) {
                throw LabelError("record '" + row.id + "': " + std::string(head_name(h)) + " label " +
                                 std::to_string(v) + " out of range");
            }
            row.labels[h] = static_cast<std::int8_t>(v);
        }
        row.labels.validate(row.id);
        rows.push_back(std::move(row));
    }
    if (!have_header) throw DataError(path.string() + ": empty manifest");
    return rows;
}

void write_label_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
    std::ostringstream os;
    os << "id";
    for (Head h : kAllHeads) os << ',' << head_name(h);
    os << '\n';
    for (const auto& row : rows) {
        if (row.id.find(',') != std::string::npos) throw DataError("record id contains a comma: '" + row.id + "'");
        os << row.id;
        for (Head h : kAllHeads) {
            os << ',';
            if (row.labels.has(h)) os << static_cast<int>(row.labels[h]);
        }
        os << '\n';
    }
    write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Statistics

SplitStats::SplitStats() {
    for (Head h : kAllHeads) counts[static_cast<int>(h)].assign(static_cast<std::size_t>(schema_classes(h)), 0);
}

SplitStats compute_stats(std::span<const LabelSet> labels) {
    SplitStats s;
    s.size = labels.size();
    for (const LabelSet& l : labels) {
        for (Head h : kAllHeads) {
            if (l.has(h)) ++s[h][static_cast<std::size_t>(l[h])];
        }
    }
    return s;
}

SplitStats compute_stats(std::span<const FeatureRecord> records) {
    std::vector<LabelSet> labels;
    labels.reserve(records.size());
    for (const auto& r : records) labels.push_back(r.labels);
    return compute_stats(labels);
}

SplitStats compute_stats(std::span<const ManifestRow> rows) {
    std::vector<LabelSet> labels;
    labels.reserve(rows.size());
    for (const auto& r : rows) labels.push_back(r.labels);
    return compute_stats(labels);
}

std::string_view split_name(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

Split parse_split(std::string_view name) {
    name = trim(name);
    if (name == "train") return Split::train;
    if (name == "validation" || name == "val") return Split::validation;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

SplitStats table1_stats(Split split) {
    SplitStats s;
    switch (split) {
        case Split::train:
            s.size = 7000;
            s[Head::sentiment] = {973, 4510, 1517};
            s[Head::humour] = {918, 3666, 1865, 551};
            s[Head::sarcasm] = {3871, 1759, 1069, 301};
            s[Head::offensive] = {5182, 1107, 529, 182};
            s[Head::motivation] = {6714, 286};
            break;
        case Split::validation:
            s.size = 1500;
            s[Head::sentiment] = {200, 975, 325};
            s[Head::humour] = {229, 745, 419, 107};
            s[Head::sarcasm] = {804, 388, 246, 62};
            s[Head::offensive] = {1110, 238, 107, 45};
            s[Head::motivation] = {1430, 70};
            break;
        case Split::test:
            s.size = 1500;
            s[Head::sentiment] = {451, 971, 78};
            s[Head::humour] = {62, 892, 398, 148};
            s[Head::sarcasm] = {185, 248, 892, 175};
            s[Head::offensive] = {943, 457, 87, 13};
            s[Head::motivation] = {1480, 20};
            break;
    }
    return s;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, RngState& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = rng.below(i);
        std::swap(v[i - 1], v[j]);
    }
}

std::vector<std::int8_t> labels_from_counts(const std::vector<std::size_t>& counts) {
    std::vector<std::int8_t> out;
    for (std::size_t c = 0; c < counts.size(); ++c) out.insert(out.end(), counts[c], static_cast<std::int8_t>(c));
    return out;
}

std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::vector<std::size_t> counts(weights.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
        const double exact = static_cast<double>(n) * weights[c] / total;
        counts[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[c];
        remainders.emplace_back(exact - std::floor(exact), c);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[remainders[i % remainders.size()].second];
    return counts;
}

void validate_weights(const ClassWeights& weights) {
    for (Head h : kAllHeads) {
        const auto& w = weights[static_cast<int>(h)];
        if (w.size() != static_cast<std::size_t>(schema_classes(h))) {
            throw ConfigError("class weights for " + std::string(head_name(h)) + " need " +
                              std::to_string(schema_classes(h)) + " entries, got " + std::to_string(w.size()));
        }
        double total = 0.0;
        for (double v : w) {
            if (!std::isfinite(v) || v < 0.0) {
                throw ConfigError("class weights for " + std::string(head_name(h)) + " must be finite and >= 0");
            }
            total += v;
        }
        if (!(total > 0.0)) {
            throw ConfigError("class weights for " + std::string(head_name(h)) + " are not normalizable");
        }
    }
}

}  // namespace

std::vector<ManifestRow> table1_manifest(Split split, std::uint64_t seed) {
    const SplitStats stats = table1_stats(split);
    std::vector<ManifestRow> rows(stats.size);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::ostringstream id;
        id << "t1-" << split_name(split) << '-' << std::setw(5) << std::setfill('0') << i;
        rows[i].id = id.str();
    }
    for (Head h : kAllHeads) {
        auto labels = labels_from_counts(stats[h]);
        RngState rng = RngState::derive(seed, 100 + static_cast<std::uint64_t>(h));
        shuffle(labels, rng);
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i].labels[h] = labels[i];
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Synthetic data

ClassWeights uniform_class_weights() {
    ClassWeights w;
    for (Head h : kAllHeads) w[static_cast<int>(h)].assign(static_cast<std::size_t>(schema_classes(h)), 1.0);
    return w;
}

ClassWeights table1_class_weights(Split split) {
    const SplitStats s = table1_stats(split);
    ClassWeights w;
    for (Head h : kAllHeads) {
        for (std::size_t c : s[h]) w[static_cast<int>(h)].push_back(static_cast<double>(c));
    }
    return w;
}

ClassWeights parse_class_weights(std::string_view spec) {
    spec = trim(spec);
    if (spec == "uniform") return uniform_class_weights();
    if (spec.starts_with("table1-")) return table1_class_weights(parse_split(spec.substr(7)));
    ClassWeights w = uniform_class_weights();
    for (auto item : split(spec, ';')) {
        if (trim(item).empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("class weight entry '" + std::string(item) + "' must look like head=w0,w1,...");
        }
        const Head h = parse_head(item.substr(0, eq));
        std::vector<double> values;
        for (auto v : split(item.substr(eq + 1), ',')) {
            try {
                values.push_back(std::stod(std::string(trim(v))));
            } catch (const std::exception&) {
                throw ConfigError("bad class weight '" + std::string(v) + "'");
            }
        }
        w[static_cast<int>(h)] = std::move(values);
    }
    validate_weights(w);
    return w;
}

std::vector<FeatureRecord> generate_synthetic(const SyntheticSpec& spec, AnchorTable* anchors_out) {
    if (spec.n < 1) throw ConfigError("synthetic record count must be at least 1");
    if (!(spec.separability >= 0.0 && spec.separability <= 1.0)) {
        throw ConfigError("separability must lie in [0, 1]");
    }
    validate_weights(spec.class_weights);

    AnchorTable anchors;
    RngState anchor_rng = RngState::derive(spec.seed, 1);
    const double anchor_scale = std::sqrt(1.0 / 5.0);
    for (Modality m : kAllModalities) {
        for (Head h : kAllHeads) {
            auto& per_class = anchors[static_cast<int>(m)][static_cast<int>(h)];
            per_class.resize(static_cast<std::size_t>(schema_classes(h)));
            for (auto& v : per_class) {
                v.resize(spec.dims[m]);
                for (float& x : v) x = static_cast<float>(anchor_rng.normal() * anchor_scale);
            }
        }
    }

    std::vector<FeatureRecord> records(spec.n);
    RngState label_rng = RngState::derive(spec.seed, 2);
    if (spec.sampling == LabelSampling::exact_quota) {
        for (Head h : kAllHeads) {
            auto labels = labels_from_counts(largest_remainder(spec.n, spec.class_weights[static_cast<int>(h)]));
            shuffle(labels, label_rng);
            for (std::size_t i = 0; i < spec.n; ++i) records[i].labels[h] = labels[i];
        }
    } else {
        std::array<std::vector<double>, 5> cumulative;
        for (Head h : kAllHeads) {
            const auto& w = spec.class_weights[static_cast<int>(h)];
            auto& cum = cumulative[static_cast<int>(h)];
            std::partial_sum(w.begin(), w.end(), std::back_inserter(cum));
            for (double& c : cum) c /= cum.back();
        }
        for (auto& rec : records) {
            for (Head h : kAllHeads) {
                const auto& cum = cumulative[static_cast<int>(h)];
                const double u = label_rng.uniform();
                const auto it = std::upper_bound(cum.begin(), cum.end(), u);
                rec.labels[h] = static_cast<std::int8_t>(std::min<std::ptrdiff_t>(
                    it - cum.begin(), static_cast<std::ptrdiff_t>(cum.size()) - 1));
            }
        }
    }

    RngState noise_rng = RngState::derive(spec.seed, 3);
    const double sep = spec.separability;
    for (std::size_t i = 0; i < spec.n; ++i) {
        FeatureRecord& rec = records[i];
        std::ostringstream id;
        id << "syn-" << std::setw(6) << std::setfill('0') << i;
        rec.id = id.str();
        for (Modality m : kAllModalities) {
            std::vector<double> acc(spec.dims[m], 0.0);
            for (Head h : kAllHeads) {
                const auto& a = anchors[static_cast<int>(m)][static_cast<int>(h)][static_cast<std::size_t>(rec.labels[h])];
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += a[j];
            }
            std::vector<float> v(acc.size());
            for (std::size_t j = 0; j < acc.size(); ++j) {
                const double noise = noise_rng.normal();
                v[j] = static_cast<float>(sep * acc[j] + (1.0 - sep) * noise);
            }
            rec.vector(m) = std::move(v);
        }
    }
    if (anchors_out) *anchors_out = std::move(anchors);
    return records;
}

// ---------------------------------------------------------------------------
// Oversampling

OversampleMode OversampleMode::parse(std::string_view text) {
    text = trim(text);
    OversampleMode mode;
    if (text == "none") {
        mode.kind = Kind::none;
    } else if (text == "mean-inverse") {
        mode.kind = Kind::mean_inverse;
    } else if (text.starts_with("single-head:")) {
        mode.kind = Kind::single_head;
        mode.head = parse_head(text.substr(12));
    } else {
        throw ConfigError("oversample mode must be none, mean-inverse or single-head:<head>, got '" +
                          std::string(text) + "'");
    }
    return mode;
}

std::string OversampleMode::to_string() const {
    switch (kind) {
        case Kind::none: return "none";
        case Kind::mean_inverse: return "mean-inverse";
        case Kind::single_head: return "single-head:" + std::string(head_name(head));
    }
    return "?";
}

std::vector<double> oversample_weights(std::span<const LabelSet> labels, const OversampleMode& mode,
                                       const std::function<void(const std::string&)>& warn) {
    std::vector<double> weights(labels.size(), 1.0);
    if (mode.kind == OversampleMode::Kind::none) return weights;

    const std::vector<Head> heads =
        mode.kind == OversampleMode::Kind::single_head ? std::vector<Head>{mode.head} : mode.heads.heads();
    const SplitStats stats = compute_stats(labels);
    if (warn) {
        for (Head h : heads) {
            for (std::size_t c = 0; c < stats[h].size(); ++c) {
                if (stats[h][c] == 0) {
                    warn("oversampling: " + std::string(head_name(h)) + " class " + std::to_string(c) +
                         " has no support and is excluded");
                }
            }
        }
    }
    std::size_t unlabeled = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        double sum = 0.0;
        int used = 0;
        for (Head h : heads) {
            if (!labels[i].has(h)) continue;
            sum += 1.0 / static_cast<double>(stats[h][static_cast<std::size_t>(labels[i][h])]);
            ++used;
        }
        weights[i] = used ? sum / used : 0.0;
        if (!used) ++unlabeled;
    }
    if (unlabeled && warn) {
        warn("oversampling: " + std::to_string(unlabeled) + " records lack the target labels and are never drawn");
    }
    return weights;
}

std::vector<std::size_t> oversample_indices(std::span<const LabelSet> labels, const OversampleMode& mode,
                                            std::uint64_t seed,
                                            const std::function<void(const std::string&)>& warn) {
    RngState rng(seed);
    std::vector<std::size_t> out(labels.size());
    if (mode.kind == OversampleMode::Kind::none) {
        std::iota(out.begin(), out.end(), std::size_t{0});
        shuffle(out, rng);
        return out;
    }
    const auto weights = oversample_weights(labels, mode, warn);
    std::vector<double> cum(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cum.begin());
    if (cum.empty() || !(cum.back() > 0.0)) {
        throw DataError("oversampling: no record carries the target labels");
    }
    const double total = cum.back();
    for (auto& idx : out) {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        if (it == cum.end()) --it;
        idx = static_cast<std::size_t>(it - cum.begin());
    }
    return out;
}

}  // namespace mmmt
