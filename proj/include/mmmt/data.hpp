#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mmmt {

// ---------------------------------------------------------------------------
// Label schema

enum class Head : int { sentiment = 0, humour = 1, sarcasm = 2, offensive = 3, motivation = 4 };

inline constexpr std::array<Head, 5> kAllHeads = {Head::sentiment, Head::humour, Head::sarcasm, Head::offensive,
                                                  Head::motivation};

/// Number of classes for a head in the label schema (3, 4, 4, 4, 2).
int schema_classes(Head head);
std::string_view head_name(Head head);
Head parse_head(std::string_view name);

/// Bit set over the five heads; bit i is Head(i).
class HeadMask {
public:
    constexpr HeadMask() = default;
    constexpr explicit HeadMask(std::uint8_t bits) : bits_(bits & 0x1F) {}
    static constexpr HeadMask all() { return HeadMask(0x1F); }
    static HeadMask parse(std::string_view csv);

    constexpr bool contains(Head h) const { return (bits_ >> static_cast<int>(h)) & 1U; }
    constexpr void set(Head h) { bits_ |= static_cast<std::uint8_t>(1U << static_cast<int>(h)); }
    constexpr bool empty() const { return bits_ == 0; }
    constexpr std::uint8_t bits() const { return bits_; }
    std::vector<Head> heads() const;
    std::string to_string() const;

    friend constexpr bool operator==(HeadMask, HeadMask) = default;

private:
    std::uint8_t bits_ = 0;
};

/// One label per head; -1 marks an absent label (unlabeled data).
struct LabelSet {
    static constexpr std::int8_t kAbsent = -1;
    std::array<std::int8_t, 5> values{kAbsent, kAbsent, kAbsent, kAbsent, kAbsent};

    std::int8_t& operator[](Head h) { return values[static_cast<int>(h)]; }
    std::int8_t operator[](Head h) const { return values[static_cast<int>(h)]; }
    bool has(Head h) const { return (*this)[h] != kAbsent; }

    /// Throws LabelError naming the record when a present value is out of range.
    void validate(const std::string& record_id) const;

    friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

// ---------------------------------------------------------------------------
// Feature records

enum class Modality : int { image = 0, clip = 1, text = 2 };

inline constexpr std::array<Modality, 3> kAllModalities = {Modality::image, Modality::clip, Modality::text};

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// Ordered set of modalities. The order is the token insertion order.
class ModalitySet {
public:
    ModalitySet() = default;
    explicit ModalitySet(std::vector<Modality> order);
    static ModalitySet all() { return ModalitySet({Modality::image, Modality::clip, Modality::text}); }
    static ModalitySet from_bits(std::uint8_t bits);
    static ModalitySet parse(std::string_view csv);

    const std::vector<Modality>& order() const { return order_; }
    bool contains(Modality m) const;
    bool empty() const { return order_.empty(); }
    std::size_t size() const { return order_.size(); }
    std::uint8_t bits() const;
    std::string to_string() const;

private:
    std::vector<Modality> order_;
};

struct FeatureDims {
    std::uint32_t image = 1792;
    std::uint32_t clip = 512;
    std::uint32_t text = 768;

    std::uint32_t operator[](Modality m) const;
    friend bool operator==(const FeatureDims&, const FeatureDims&) = default;
};

struct FeatureRecord {
    std::string id;
    std::optional<std::vector<float>> image;
    std::optional<std::vector<float>> clip;
    std::optional<std::vector<float>> text;
    LabelSet labels;

    const std::optional<std::vector<float>>& vector(Modality m) const;
    std::optional<std::vector<float>>& vector(Modality m);

    friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

struct FeatureFile {
    FeatureDims dims;
    std::vector<FeatureRecord> records;
};

/// "MMF1" little-endian binary feature format:
///   magic "MMF1", u32 version (1), u32 dims image/clip/text, u64 record count,
///   then per record: u16 id length, UTF-8 id bytes, u8 presence mask
///   (bit0 image, bit1 clip, bit2 text), each present vector as float32 in
///   image/clip/text order, and five i8 labels (-1 = absent).
void write_feature_file(const std::filesystem::path& path, const FeatureDims& dims,
                        std::span<const FeatureRecord> records);
std::vector<unsigned char> encode_feature_file(const FeatureDims& dims, std::span<const FeatureRecord> records);
FeatureFile read_feature_file(const std::filesystem::path& path);
FeatureFile decode_feature_file(std::span<const unsigned char> bytes);

/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const unsigned char> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Label manifests (CSV: id,sentiment,humour,sarcasm,offensive,motivation)

struct ManifestRow {
    std::string id;
    LabelSet labels;
};

std::vector<ManifestRow> read_label_manifest(const std::filesystem::path& path);
void write_label_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows);

// ---------------------------------------------------------------------------
// Split statistics

struct SplitStats {
    std::size_t size = 0;
    // counts[head][class]; widths follow the label schema.
    std::array<std::vector<std::size_t>, 5> counts;

    SplitStats();
    const std::vector<std::size_t>& operator[](Head h) const { return counts[static_cast<int>(h)]; }
    std::vector<std::size_t>& operator[](Head h) { return counts[static_cast<int>(h)]; }

    friend bool operator==(const SplitStats&, const SplitStats&) = default;
};

SplitStats compute_stats(std::span<const LabelSet> labels);
SplitStats compute_stats(std::span<const FeatureRecord> records);
SplitStats compute_stats(std::span<const ManifestRow> rows);

enum class Split { train, validation, test };
std::string_view split_name(Split split);
Split parse_split(std::string_view name);

/// Published MEMOTION 2.0 label distribution for one split.
SplitStats table1_stats(Split split);

/// Label manifest whose per-head marginals equal table1_stats(split) exactly.
/// Labels of different heads are paired by independent deterministic shuffles.
std::vector<ManifestRow> table1_manifest(Split split, std::uint64_t seed = 2022);

// ---------------------------------------------------------------------------
// Synthetic data

enum class LabelSampling {
    multinomial,  // i.i.d. draws from the class weights
    exact_quota,  // largest-remainder quotas, then shuffled
};

using ClassWeights = std::array<std::vector<double>, 5>;

/// Uniform weights over every class of the schema.
ClassWeights uniform_class_weights();
/// Class proportions of one Table 1 split.
ClassWeights table1_class_weights(Split split);
/// Parses "uniform", "table1-train", "table1-validation", "table1-test" or an
/// inline list such as "sentiment=1,4,1;motivation=9,1" (unlisted heads uniform).
ClassWeights parse_class_weights(std::string_view spec);

struct SyntheticSpec {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double separability = 1.0;
    FeatureDims dims;
    ClassWeights class_weights = uniform_class_weights();
    LabelSampling sampling = LabelSampling::multinomial;
};

/// Class-conditional anchor vectors used by the generator: anchors[modality][head][class].
using AnchorTable = std::array<std::array<std::vector<std::vector<float>>, 5>, 3>;

/// Each modality vector is separability * sum_h anchor[m][h][label_h] plus
/// (1 - separability) * N(0, 1) noise. Anchor entries are N(0, 1/5) so the
/// anchor sum has unit variance per coordinate.
std::vector<FeatureRecord> generate_synthetic(const SyntheticSpec& spec, AnchorTable* anchors = nullptr);

// ---------------------------------------------------------------------------
// Oversampling

struct OversampleMode {
    enum class Kind { none, single_head, mean_inverse } kind = Kind::mean_inverse;
    Head head = Head::sentiment;  // used by single_head
    HeadMask heads = HeadMask::all();  // used by mean_inverse

    static OversampleMode parse(std::string_view text);
    std::string to_string() const;
};

/// Per-record sampling weight. single_head: 1/freq(class); mean_inverse: mean
/// over the selected heads of 1/freq(class). Records without the needed label
/// get weight zero.
std::vector<double> oversample_weights(std::span<const LabelSet> labels, const OversampleMode& mode,
                                       const std::function<void(const std::string&)>& warn = {});

/// One epoch of indices drawn with replacement (length == labels.size()).
/// Kind::none yields a shuffled permutation.
std::vector<std::size_t> oversample_indices(std::span<const LabelSet> labels, const OversampleMode& mode,
                                            std::uint64_t seed,
                                            const std::function<void(const std::string&)>& warn = {});

}  // namespace mmmt
