#pragma once

// DICOM PS3.10 reader/writer covering the two uncompressed little-endian
// transfer syntaxes (Explicit VR LE, Implicit VR LE). Sequences are skipped
// wholesale; unknown tags survive as UN elements with their raw payload, so a
// parsed file can be re-serialized without loss.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "protoscope/errors.hpp"
#include "protoscope/rng.hpp"
#include "protoscope/stats.hpp"

namespace protoscope::dicom {

struct TagPath {
    std::uint16_t group = 0;
    std::uint16_t element = 0;
    friend bool operator==(const TagPath&, const TagPath&) = default;
    friend auto operator<=>(const TagPath&, const TagPath&) = default;
};

// Tags consumed by extract_record / extract_pixels.
inline constexpr TagPath kSopInstanceUid{0x0008, 0x0018};
inline constexpr TagPath kBodyPart{0x0018, 0x0015};
inline constexpr TagPath kSliceThickness{0x0018, 0x0050};
inline constexpr TagPath kRepetitionTime{0x0018, 0x0080};
inline constexpr TagPath kEchoTime{0x0018, 0x0081};
inline constexpr TagPath kNumberOfAverages{0x0018, 0x0083};
inline constexpr TagPath kPercentSampling{0x0018, 0x0093};
inline constexpr TagPath kPercentPhaseFov{0x0018, 0x0094};
inline constexpr TagPath kProtocolName{0x0018, 0x1030};
inline constexpr TagPath kReconstructionDiameter{0x0018, 0x1100};
inline constexpr TagPath kReceiveCoil{0x0018, 0x1250};
inline constexpr TagPath kStudyUid{0x0020, 0x000D};
inline constexpr TagPath kSeriesUid{0x0020, 0x000E};
inline constexpr TagPath kInstanceNumber{0x0020, 0x0013};
inline constexpr TagPath kImageOrientation{0x0020, 0x0037};
inline constexpr TagPath kSliceLocation{0x0020, 0x1041};
inline constexpr TagPath kPatientName{0x0010, 0x0010};
inline constexpr TagPath kPatientSex{0x0010, 0x0040};
inline constexpr TagPath kPatientAge{0x0010, 0x1010};
inline constexpr TagPath kPatientWeight{0x0010, 0x1030};
inline constexpr TagPath kRows{0x0028, 0x0010};
inline constexpr TagPath kCols{0x0028, 0x0011};
inline constexpr TagPath kPixelSpacing{0x0028, 0x0030};
inline constexpr TagPath kBitsAllocated{0x0028, 0x0100};
inline constexpr TagPath kBitsStored{0x0028, 0x0101};
inline constexpr TagPath kHighBit{0x0028, 0x0102};
inline constexpr TagPath kPixelRepresentation{0x0028, 0x0103};
inline constexpr TagPath kPixelData{0x7FE0, 0x0010};

/// Decoded view of an element payload. Numeric VRs with multiplicity > 1
/// decode their first value; helpers below pull the full list when needed.
using DecodedValue =
    std::variant<std::monostate, std::int64_t, double, std::string, std::vector<std::uint8_t>>;

struct DicomElement {
    TagPath tag;
    std::string vr;                    // two-character value representation
    std::vector<std::uint8_t> payload; // raw bytes, excluding header
    DecodedValue decoded;
    bool undefined_length = false;     // sequences skipped with length 0xFFFFFFFF

    bool has_decoded() const { return decoded.index() != 0; }
};

enum class Plane { sagittal, axial, coronal, unknown };
enum class Weighting { T1, T2, other };
enum class Sex { F, M, other };

inline const char* to_string(Plane p) {
    switch (p) {
        case Plane::sagittal: return "sagittal";
        case Plane::axial: return "axial";
        case Plane::coronal: return "coronal";
        default: return "unknown";
    }
}
inline const char* to_string(Weighting w) {
    switch (w) {
        case Weighting::T1: return "T1";
        case Weighting::T2: return "T2";
        default: return "other";
    }
}
inline const char* to_string(Sex s) {
    switch (s) {
        case Sex::F: return "F";
        case Sex::M: return "M";
        default: return "other";
    }
}

/// One image's acquisition parameters and patient covariates.
struct MetaRecord {
    std::string study_id;
    std::string series_id;
    std::optional<int> instance_number;
    std::string protocol_name;
    std::string body_part;
    std::string coil;
    Plane plane = Plane::unknown;
    Weighting weighting = Weighting::other;
    std::optional<double> tr_ms;
    std::optional<double> te_ms;
    std::optional<double> nex;
    std::optional<double> percent_sampling;
    std::optional<double> percent_phase_fov;
    std::optional<double> fov_mm;
    std::optional<double> slice_thickness_mm;
    std::optional<double> slice_location_mm;
    std::optional<int> rows;
    std::optional<int> cols;
    std::optional<std::pair<double, double>> pixel_spacing_mm;
    std::optional<double> age_years;
    std::optional<double> weight_kg;
    Sex sex = Sex::other;
};

struct PixelSlab {
    int rows = 0;
    int cols = 0;
    int bits_stored = 16;
    std::vector<std::uint32_t> samples; // row-major, each < 2^bits_stored
};

namespace detail {

constexpr std::uint32_t kUndefinedLength = 0xFFFFFFFFu;

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }
    bool eof() const { return pos_ >= size_; }

    void require(std::size_t n) const {
        if (n > remaining()) throw TruncatedElement("element extends past end of stream");
    }
    std::uint16_t u16() {
        require(2);
        const std::uint16_t v = static_cast<std::uint16_t>(data_[pos_]) |
                                static_cast<std::uint16_t>(data_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | data_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }
    std::vector<std::uint8_t> bytes(std::size_t n) {
        require(n);
        std::vector<std::uint8_t> out(data_ + pos_, data_ + pos_ + n);
        pos_ += n;
        return out;
    }
    void skip(std::size_t n) {
        require(n);
        pos_ += n;
    }

private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline bool vr_has_long_length(const std::string& vr) {
    return vr == "OB" || vr == "OW" || vr == "OF" || vr == "OL" || vr == "OD" ||
           vr == "SQ" || vr == "UC" || vr == "UR" || vr == "UT" || vr == "UN";
}

/// Implicit VR lookup for the tags this pipeline understands; UN otherwise.
inline std::string implicit_vr(TagPath tag) {
    if (tag.element == 0x0000) return "UL"; // group length
    static const std::map<TagPath, std::string> dict = {
        {kSopInstanceUid, "UI"},       {{0x0008, 0x0050}, "SH"},
        {{0x0008, 0x0060}, "CS"},      {{0x0008, 0x0080}, "LO"},
        {{0x0008, 0x0081}, "ST"},      {{0x0008, 0x0090}, "PN"},
        {{0x0008, 0x1040}, "LO"},      {{0x0008, 0x1048}, "PN"},
        {{0x0008, 0x1050}, "PN"},      {{0x0008, 0x1060}, "PN"},
        {{0x0008, 0x1070}, "PN"},      {kPatientName, "PN"},
        {{0x0010, 0x0020}, "LO"},      {{0x0010, 0x0030}, "DA"},
        {kPatientSex, "CS"},           {{0x0010, 0x1000}, "LO"},
        {{0x0010, 0x1001}, "PN"},      {kPatientAge, "AS"},
        {kPatientWeight, "DS"},        {{0x0010, 0x1040}, "LO"},
        {{0x0010, 0x2154}, "SH"},      {kBodyPart, "CS"},
        {kSliceThickness, "DS"},       {kRepetitionTime, "DS"},
        {kEchoTime, "DS"},             {kNumberOfAverages, "DS"},
        {kPercentSampling, "DS"},      {kPercentPhaseFov, "DS"},
        {kProtocolName, "LO"},         {kReconstructionDiameter, "DS"},
        {kReceiveCoil, "SH"},          {kStudyUid, "UI"},
        {kSeriesUid, "UI"},            {kInstanceNumber, "IS"},
        {kImageOrientation, "DS"},     {kSliceLocation, "DS"},
        {{0x0028, 0x0002}, "US"},      {{0x0028, 0x0004}, "CS"},
        {kRows, "US"},                 {kCols, "US"},
        {kPixelSpacing, "DS"},         {kBitsAllocated, "US"},
        {kBitsStored, "US"},           {kHighBit, "US"},
        {kPixelRepresentation, "US"},  {kPixelData, "OW"},
    };
    const auto it = dict.find(tag);
    return it == dict.end() ? "UN" : it->second;
}

inline std::string trim_padding(const std::vector<std::uint8_t>& payload) {
    std::size_t end = payload.size();
    while (end > 0 && (payload[end - 1] == ' ' || payload[end - 1] == '\0')) --end;
    std::size_t begin = 0;
    while (begin < end && payload[begin] == ' ') ++begin;
    return std::string(payload.begin() + static_cast<std::ptrdiff_t>(begin),
                       payload.begin() + static_cast<std::ptrdiff_t>(end));
}

inline std::optional<double> parse_decimal(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) return std::nullopt;
    return v;
}

/// Splits a backslash-separated numeric string ("1.2\\3.4").
inline std::vector<double> parse_decimal_list(const std::string& s) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const std::size_t sep = s.find('\\', start);
        const std::string part =
            s.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
        if (const auto v = parse_decimal(part)) out.push_back(*v);
        if (sep == std::string::npos) break;
        start = sep + 1;
    }
    return out;
}

inline DecodedValue decode(const TagPath&, const std::string& vr,
                           const std::vector<std::uint8_t>& payload) {
    if (vr == "US" || vr == "SS" || vr == "UL") {
        if (vr == "UL" && payload.size() >= 4) {
            std::uint32_t v = 0;
            for (int i = 3; i >= 0; --i) v = (v << 8) | payload[static_cast<std::size_t>(i)];
            return static_cast<std::int64_t>(v);
        }
        if (vr != "UL" && payload.size() >= 2) {
            const std::uint16_t v = static_cast<std::uint16_t>(payload[0]) |
                                    static_cast<std::uint16_t>(payload[1]) << 8;
            if (vr == "SS") return static_cast<std::int64_t>(static_cast<std::int16_t>(v));
            return static_cast<std::int64_t>(v);
        }
        return std::monostate{};
    }
    if (vr == "IS") {
        const auto v = parse_decimal(trim_padding(payload));
        if (!v) return std::monostate{};
        return static_cast<std::int64_t>(*v);
    }
    if (vr == "DS") {
        const auto list = parse_decimal_list(trim_padding(payload));
        if (list.empty()) return std::monostate{};
        return list.front();
    }
    if (vr == "FL") {
        if (payload.size() < 4) return std::monostate{};
        float f;
        std::memcpy(&f, payload.data(), 4);
        return static_cast<double>(f);
    }
    if (vr == "FD") {
        if (payload.size() < 8) return std::monostate{};
        double d;
        std::memcpy(&d, payload.data(), 8);
        return d;
    }
    if (vr == "CS" || vr == "LO" || vr == "SH" || vr == "PN" || vr == "DA" ||
        vr == "AS" || vr == "TM" || vr == "UI") {
        return trim_padding(payload);
    }
    if (vr == "OW" || vr == "OB" || vr == "UN") return payload;
    return std::monostate{};
}

inline void skip_undefined_sequence(Reader& r, bool explicit_vr);

/// Skips nested dataset elements until the (FFFE,E00D) item delimiter.
inline void skip_undefined_item(Reader& r, bool explicit_vr) {
    for (;;) {
        const std::uint16_t group = r.u16();
        const std::uint16_t elem = r.u16();
        if (group == 0xFFFE && elem == 0xE00D) {
            r.u32(); // delimiter length, zero
            return;
        }
        std::uint32_t len;
        std::string vr = "UN";
        if (explicit_vr) {
            const auto vr_bytes = r.bytes(2);
            vr.assign(vr_bytes.begin(), vr_bytes.end());
            if (vr_has_long_length(vr)) {
                r.skip(2);
                len = r.u32();
            } else {
                len = r.u16();
            }
        } else {
            len = r.u32();
        }
        if (len == kUndefinedLength) {
            skip_undefined_sequence(r, explicit_vr); // nested SQ
        } else {
            r.skip(len);
        }
    }
}

/// Advances the reader past the body of an undefined-length sequence,
/// consuming the trailing sequence delimitation item. The caller captures the
/// skipped byte span for lossless re-serialization.
inline void skip_undefined_sequence(Reader& r, bool explicit_vr) {
    for (;;) {
        const std::uint16_t group = r.u16();
        const std::uint16_t elem = r.u16();
        const std::uint32_t len = r.u32();
        if (group == 0xFFFE && elem == 0xE0DD) return; // sequence delimiter
        if (group == 0xFFFE && elem == 0xE000) {       // item
            if (len == kUndefinedLength) {
                skip_undefined_item(r, explicit_vr);
            } else {
                r.skip(len);
            }
            continue;
        }
        throw TruncatedElement("unexpected tag inside undefined-length sequence");
    }
}

} // namespace detail

inline constexpr const char* kTransferSyntaxImplicitLE = "1.2.840.10008.1.2";
inline constexpr const char* kTransferSyntaxExplicitLE = "1.2.840.10008.1.2.1";

/// Parse a DICOM byte stream into its top-level elements (meta group included).
/// Accepts the standard 128-byte preamble + "DICM" form or a bare stream that
/// starts directly with the group-0002 meta header.
inline std::vector<DicomElement> parse_file(const std::vector<std::uint8_t>& bytes) {
    using detail::Reader;
    const std::uint8_t* data = bytes.data();
    std::size_t size = bytes.size();
    std::size_t offset = 0;

    if (size >= 132 && std::memcmp(data + 128, "DICM", 4) == 0) {
        offset = 132;
    } else if (size >= 8 && data[0] == 0x02 && data[1] == 0x00) {
        offset = 0; // bare meta header
    } else {
        throw MalformedHeader("no DICM magic and no plausible group-0002 stream");
    }

    Reader r(data + offset, size - offset);
    std::vector<DicomElement> elements;
    std::string transfer_syntax;
    bool in_meta = true;
    bool explicit_vr = true; // meta group is always explicit VR LE

    while (!r.eof()) {
        DicomElement el;
        el.tag.group = r.u16();
        el.tag.element = r.u16();

        if (in_meta && el.tag.group != 0x0002) {
            // meta group finished; switch to the negotiated transfer syntax
            in_meta = false;
            if (transfer_syntax == kTransferSyntaxImplicitLE) {
                explicit_vr = false;
            } else if (transfer_syntax == kTransferSyntaxExplicitLE || transfer_syntax.empty()) {
                explicit_vr = true;
                if (transfer_syntax.empty() && !elements.empty())
                    throw UnsupportedTransferSyntax("meta header lacks (0002,0010)");
            } else {
                throw UnsupportedTransferSyntax("transfer syntax " + transfer_syntax);
            }
        }

        std::uint32_t length = 0;
        if (explicit_vr || in_meta) {
            const auto vr_bytes = r.bytes(2);
            el.vr.assign(vr_bytes.begin(), vr_bytes.end());
            if (el.vr[0] < 'A' || el.vr[0] > 'Z' || el.vr[1] < 'A' || el.vr[1] > 'Z')
                throw MalformedHeader("invalid VR bytes in element header");
            if (detail::vr_has_long_length(el.vr)) {
                r.skip(2);
                length = r.u32();
            } else {
                length = r.u16();
            }
        } else {
            length = r.u32();
            el.vr = detail::implicit_vr(el.tag);
        }

        if (length == detail::kUndefinedLength) {
            if (el.tag == kPixelData)
                throw UnsupportedTransferSyntax("encapsulated (compressed) pixel data");
            if (el.vr != "SQ" && el.vr != "UN")
                throw TruncatedElement("undefined length on a non-sequence element");
            // skip the sequence wholesale, keeping the item bytes (without the
            // trailing delimiter) so re-serialization can use a defined length
            const std::size_t body_start = r.pos();
            detail::skip_undefined_sequence(r, explicit_vr || in_meta);
            const std::size_t body_end = r.pos() - 8;
            el.payload.assign(data + offset + body_start, data + offset + body_end);
            el.undefined_length = true;
            el.vr = "SQ";
            elements.push_back(std::move(el));
            continue;
        }

        if (el.vr == "SQ") {
            el.payload = r.bytes(length); // defined-length sequence, not descended
            elements.push_back(std::move(el));
            continue;
        }

        el.payload = r.bytes(length);
        el.decoded = detail::decode(el.tag, el.vr, el.payload);

        if (in_meta && el.tag == TagPath{0x0002, 0x0010})
            transfer_syntax = detail::trim_padding(el.payload);

        elements.push_back(std::move(el));
    }

    if (in_meta) {
        // the whole file was meta group; still validate the declared syntax
        if (!transfer_syntax.empty() && transfer_syntax != kTransferSyntaxExplicitLE &&
            transfer_syntax != kTransferSyntaxImplicitLE)
            throw UnsupportedTransferSyntax("transfer syntax " + transfer_syntax);
    }
    return elements;
}

inline const DicomElement* find_element(const std::vector<DicomElement>& elements, TagPath tag) {
    for (const auto& el : elements)
        if (el.tag == tag) return &el;
    return nullptr;
}

namespace detail {

inline std::optional<std::string> get_string(const std::vector<DicomElement>& els, TagPath tag) {
    const auto* el = find_element(els, tag);
    if (!el) return std::nullopt;
    if (const auto* s = std::get_if<std::string>(&el->decoded)) return *s;
    return std::nullopt;
}

inline std::optional<double> get_decimal(const std::vector<DicomElement>& els, TagPath tag) {
    const auto* el = find_element(els, tag);
    if (!el) return std::nullopt;
    if (const auto* d = std::get_if<double>(&el->decoded)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&el->decoded))
        return static_cast<double>(*i);
    return std::nullopt;
}

inline std::optional<int> get_int(const std::vector<DicomElement>& els, TagPath tag) {
    const auto* el = find_element(els, tag);
    if (!el) return std::nullopt;
    if (const auto* i = std::get_if<std::int64_t>(&el->decoded)) return static_cast<int>(*i);
    if (const auto* d = std::get_if<double>(&el->decoded)) return static_cast<int>(*d);
    return std::nullopt;
}

inline std::vector<double> get_decimal_list(const std::vector<DicomElement>& els, TagPath tag) {
    const auto* el = find_element(els, tag);
    if (!el) return {};
    return parse_decimal_list(trim_padding(el->payload));
}

/// "045Y" -> 45, "018M" -> 1.5; bare digits default to years.
inline std::optional<double> parse_age(const std::string& s) {
    if (s.empty()) return std::nullopt;
    std::size_t digits = 0;
    while (digits < s.size() && s[digits] >= '0' && s[digits] <= '9') ++digits;
    if (digits == 0) return std::nullopt;
    const double n = std::stod(s.substr(0, digits));
    char unit = digits < s.size() ? s[digits] : 'Y';
    switch (unit) {
        case 'D': return n / 365.0;
        case 'W': return n / 52.14;
        case 'M': return n / 12.0;
        case 'Y': return n;
        default: return std::nullopt;
    }
}

inline Plane classify_plane(const std::vector<double>& cosines) {
    if (cosines.size() != 6) return Plane::unknown;
    const double rx = cosines[0], ry = cosines[1], rz = cosines[2];
    const double cx = cosines[3], cy = cosines[4], cz = cosines[5];
    const double nx = ry * cz - rz * cy;
    const double ny = rz * cx - rx * cz;
    const double nz = rx * cy - ry * cx;
    const double ax = std::abs(nx), ay = std::abs(ny), az = std::abs(nz);
    // dominant normal component must be within 0.1 of a unit axis
    if (ax >= ay && ax >= az && ax >= 0.9) return Plane::sagittal;
    if (ay >= ax && ay >= az && ay >= 0.9) return Plane::coronal;
    if (az >= ax && az >= ay && az >= 0.9) return Plane::axial;
    return Plane::unknown;
}

inline Weighting classify_weighting(const std::string& protocol) {
    std::string upper;
    upper.reserve(protocol.size());
    for (char c : protocol) upper.push_back(static_cast<char>(std::toupper(c)));
    const std::size_t p1 = upper.find("T1");
    const std::size_t p2 = upper.find("T2");
    if (p1 == std::string::npos && p2 == std::string::npos) return Weighting::other;
    if (p2 == std::string::npos || p1 < p2) return Weighting::T1;
    return Weighting::T2;
}

} // namespace detail

/// Populate a MetaRecord from parsed elements; missing tags yield absent fields.
inline MetaRecord extract_record(const std::vector<DicomElement>& elements) {
    using namespace detail;
    MetaRecord rec;
    rec.study_id = get_string(elements, kStudyUid).value_or("");
    rec.series_id = get_string(elements, kSeriesUid).value_or("");
    rec.instance_number = get_int(elements, kInstanceNumber);
    rec.protocol_name = get_string(elements, kProtocolName).value_or("");
    rec.body_part = get_string(elements, kBodyPart).value_or("");
    rec.coil = get_string(elements, kReceiveCoil).value_or("");
    rec.plane = classify_plane(get_decimal_list(elements, kImageOrientation));
    rec.weighting = classify_weighting(rec.protocol_name);
    rec.tr_ms = get_decimal(elements, kRepetitionTime);
    rec.te_ms = get_decimal(elements, kEchoTime);
    rec.nex = get_decimal(elements, kNumberOfAverages);
    rec.percent_sampling = get_decimal(elements, kPercentSampling);
    rec.percent_phase_fov = get_decimal(elements, kPercentPhaseFov);
    rec.fov_mm = get_decimal(elements, kReconstructionDiameter);
    rec.slice_thickness_mm = get_decimal(elements, kSliceThickness);
    rec.slice_location_mm = get_decimal(elements, kSliceLocation);
    rec.rows = get_int(elements, kRows);
    rec.cols = get_int(elements, kCols);
    const auto spacing = get_decimal_list(elements, kPixelSpacing);
    if (spacing.size() >= 2) rec.pixel_spacing_mm = std::make_pair(spacing[0], spacing[1]);
    if (const auto age = get_string(elements, kPatientAge)) rec.age_years = parse_age(*age);
    rec.weight_kg = get_decimal(elements, kPatientWeight);
    const auto sex = get_string(elements, kPatientSex).value_or("");
    rec.sex = sex == "F" ? Sex::F : sex == "M" ? Sex::M : Sex::other;
    return rec;
}

/// Decode the uncompressed pixel payload into a PixelSlab.
inline PixelSlab extract_pixels(const std::vector<DicomElement>& elements) {
    using namespace detail;
    const auto* pixel = find_element(elements, kPixelData);
    if (!pixel) throw MissingCriticalTag("pixel data (7FE0,0010) absent");
    const auto rows = get_int(elements, kRows);
    const auto cols = get_int(elements, kCols);
    if (!rows || !cols || *rows <= 0 || *cols <= 0)
        throw MissingCriticalTag("rows/cols absent while decoding pixels");
    const int bits_allocated = get_int(elements, kBitsAllocated).value_or(16);
    const int bits_stored = get_int(elements, kBitsStored).value_or(bits_allocated);
    const int pixel_rep = get_int(elements, kPixelRepresentation).value_or(0);
    if (bits_allocated != 8 && bits_allocated != 16)
        throw UnsupportedPixelEncoding("bits allocated " + std::to_string(bits_allocated));
    if (bits_stored < 1 || bits_stored > 16 || bits_stored > bits_allocated)
        throw UnsupportedPixelEncoding("bits stored " + std::to_string(bits_stored));
    if (pixel_rep != 0) throw UnsupportedPixelEncoding("signed pixel representation");

    const std::size_t n = static_cast<std::size_t>(*rows) * static_cast<std::size_t>(*cols);
    const std::size_t bytes_per = static_cast<std::size_t>(bits_allocated) / 8;
    const std::size_t expected = n * bytes_per;
    const std::size_t actual = pixel->payload.size();
    const bool padded_ok = bytes_per == 1 && expected % 2 == 1 && actual == expected + 1;
    if (actual != expected && !padded_ok)
        throw PixelLengthMismatch("pixel payload " + std::to_string(actual) + " bytes, expected " +
                                  std::to_string(expected));

    PixelSlab slab;
    slab.rows = *rows;
    slab.cols = *cols;
    slab.bits_stored = bits_stored;
    slab.samples.resize(n);
    const std::uint32_t mask = bits_stored == 32 ? 0xFFFFFFFFu : ((1u << bits_stored) - 1u);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint32_t v;
        if (bytes_per == 1) {
            v = pixel->payload[i];
        } else {
            v = static_cast<std::uint32_t>(pixel->payload[2 * i]) |
                static_cast<std::uint32_t>(pixel->payload[2 * i + 1]) << 8;
        }
        slab.samples[i] = v & mask; // overlay bits above bits_stored are dropped
    }
    return slab;
}

// ---------------------------------------------------------------------------
// PHI scrubbing

enum class ScrubAction { remove, blank, hash };

struct ScrubRule {
    TagPath tag;
    ScrubAction action;
};

/// Built-in deny list: identifying names, ids, dates, addresses; study/series
/// instance UIDs are replaced by salted hashes. Acquisition parameters and the
/// age/weight/sex covariates are intentionally absent.
inline std::vector<ScrubRule> default_deny_list() {
    return {
        {{0x0008, 0x0018}, ScrubAction::hash},   // SOP instance UID
        {{0x0008, 0x0050}, ScrubAction::blank},  // accession number
        {{0x0008, 0x0080}, ScrubAction::blank},  // institution name
        {{0x0008, 0x0081}, ScrubAction::remove}, // institution address
        {{0x0008, 0x0090}, ScrubAction::blank},  // referring physician
        {{0x0008, 0x1040}, ScrubAction::remove}, // institutional department
        {{0x0008, 0x1048}, ScrubAction::remove}, // physicians of record
        {{0x0008, 0x1050}, ScrubAction::remove}, // performing physician
        {{0x0008, 0x1060}, ScrubAction::remove}, // physicians reading study
        {{0x0008, 0x1070}, ScrubAction::remove}, // operators' name
        {{0x0010, 0x0010}, ScrubAction::blank},  // patient name
        {{0x0010, 0x0020}, ScrubAction::blank},  // patient id
        {{0x0010, 0x0030}, ScrubAction::remove}, // birth date
        {{0x0010, 0x1000}, ScrubAction::remove}, // other patient ids
        {{0x0010, 0x1001}, ScrubAction::remove}, // other patient names
        {{0x0010, 0x1040}, ScrubAction::remove}, // patient address
        {{0x0010, 0x2154}, ScrubAction::remove}, // patient phone
        {{0x0020, 0x000D}, ScrubAction::hash},   // study instance UID
        {{0x0020, 0x000E}, ScrubAction::hash},   // series instance UID
    };
}

/// Parse "GGGG,EEEE action" lines; '#' starts a comment.
inline std::vector<ScrubRule> parse_deny_list(const std::string& text) {
    std::vector<ScrubRule> rules;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        const std::size_t hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        unsigned group, element;
        char action[16] = {0};
        if (std::sscanf(line.c_str(), " %4x,%4x %15s", &group, &element, action) == 3) {
            ScrubAction a;
            const std::string s(action);
            if (s == "remove") a = ScrubAction::remove;
            else if (s == "blank") a = ScrubAction::blank;
            else if (s == "hash") a = ScrubAction::hash;
            else throw BadConfig("unknown scrub action: " + s);
            rules.push_back({{static_cast<std::uint16_t>(group),
                              static_cast<std::uint16_t>(element)},
                             a});
        }
    }
    return rules;
}

inline std::string render_deny_list(const std::vector<ScrubRule>& rules) {
    std::string out = "# tag deny list: GGGG,EEEE action (remove|blank|hash)\n";
    char buf[64];
    for (const auto& r : rules) {
        const char* action = r.action == ScrubAction::remove ? "remove"
                             : r.action == ScrubAction::blank ? "blank"
                                                              : "hash";
        std::snprintf(buf, sizeof(buf), "%04X,%04X %s\n", r.tag.group, r.tag.element, action);
        out += buf;
    }
    return out;
}

namespace detail {

inline std::string hash_uid(const std::string& uid, const std::string& salt) {
    // UIDs already under the anonymized 2.25 root pass through, which makes
    // scrubbing idempotent.
    if (uid.rfind("2.25.", 0) == 0) return uid;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : salt) h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
    for (char c : uid) h = (h ^ static_cast<std::uint8_t>(c)) * 0x100000001b3ULL;
    return "2.25." + std::to_string(rng::mix64(h));
}

} // namespace detail

/// Remove or neutralize identifying elements. Acquisition parameters survive;
/// odd (private) groups are dropped wholesale. Idempotent.
inline std::vector<DicomElement> scrub_phi(const std::vector<DicomElement>& elements,
                                           const std::vector<ScrubRule>& rules,
                                           const std::string& salt = "protoscope") {
    std::vector<DicomElement> out;
    out.reserve(elements.size());
    for (const auto& el : elements) {
        if (el.tag.group != 0x0002 && el.tag.group % 2 == 1) continue; // private block
        const ScrubRule* rule = nullptr;
        for (const auto& r : rules)
            if (r.tag == el.tag) {
                rule = &r;
                break;
            }
        if (!rule) {
            out.push_back(el);
            continue;
        }
        if (rule->action == ScrubAction::remove) continue;
        DicomElement copy = el;
        if (rule->action == ScrubAction::blank) {
            copy.payload.clear();
            copy.decoded = copy.has_decoded() ? DecodedValue(std::string()) : copy.decoded;
        } else {
            std::string uid;
            if (const auto* s = std::get_if<std::string>(&el.decoded)) uid = *s;
            else uid = detail::trim_padding(el.payload);
            const std::string hashed = detail::hash_uid(uid, salt);
            copy.payload.assign(hashed.begin(), hashed.end());
            if (copy.payload.size() % 2 == 1) copy.payload.push_back('\0');
            copy.decoded = hashed;
        }
        out.push_back(std::move(copy));
    }
    return out;
}

inline std::vector<DicomElement> scrub_phi(const std::vector<DicomElement>& elements) {
    return scrub_phi(elements, default_deny_list());
}

// ---------------------------------------------------------------------------
// Serialization (Explicit VR Little Endian)

namespace detail {

struct Writer {
    std::vector<std::uint8_t> out;

    void u16(std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v & 0xFF));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
    }
    void raw(const std::vector<std::uint8_t>& bytes) {
        out.insert(out.end(), bytes.begin(), bytes.end());
    }

    void element(const DicomElement& el) {
        u16(el.tag.group);
        u16(el.tag.element);
        out.push_back(static_cast<std::uint8_t>(el.vr[0]));
        out.push_back(static_cast<std::uint8_t>(el.vr[1]));
        if (vr_has_long_length(el.vr)) {
            u16(0);
            u32(static_cast<std::uint32_t>(el.payload.size()));
        } else {
            u16(static_cast<std::uint16_t>(el.payload.size()));
        }
        raw(el.payload);
    }
};

inline std::vector<std::uint8_t> pad_string(std::string s, char pad) {
    if (s.size() % 2 == 1) s.push_back(pad);
    return std::vector<std::uint8_t>(s.begin(), s.end());
}

inline DicomElement make_string_element(TagPath tag, const std::string& vr,
                                        const std::string& value) {
    DicomElement el;
    el.tag = tag;
    el.vr = vr;
    el.payload = pad_string(value, vr == "UI" ? '\0' : ' ');
    el.decoded = decode(tag, vr, el.payload);
    return el;
}

inline DicomElement make_us_element(TagPath tag, std::uint16_t v) {
    DicomElement el;
    el.tag = tag;
    el.vr = "US";
    el.payload = {static_cast<std::uint8_t>(v & 0xFF), static_cast<std::uint8_t>(v >> 8)};
    el.decoded = static_cast<std::int64_t>(v);
    return el;
}

inline std::string format_ds(double v) {
    std::string s = stats::format_double(v);
    if (s.size() > 16) throw InvalidRecord("decimal string exceeds 16 bytes: " + s);
    return s;
}

inline std::string format_age(double years) {
    const double y = years;
    const auto integral = [](double x) { return x == static_cast<double>(static_cast<long long>(x)); };
    if (y >= 0 && y <= 999 && integral(y))
        {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%03dY", static_cast<int>(y));
        return buf;
    }
    const double months = y * 12.0;
    if (months >= 0 && months <= 999 && integral(months)) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "%03dM", static_cast<int>(months));
        return buf;
    }
    throw InvalidRecord("age " + stats::format_double(years) + " is not AS-representable");
}

} // namespace detail

/// Re-serialize an element list as a PS3.10 file (Explicit VR LE). The group
/// 0002 length is recomputed; a minimal meta header is synthesized if absent.
inline std::vector<std::uint8_t> serialize_elements(const std::vector<DicomElement>& elements) {
    using namespace detail;
    std::vector<DicomElement> meta, dataset;
    for (const auto& el : elements) {
        if (el.tag.group == 0x0002) {
            if (el.tag.element != 0x0000) meta.push_back(el); // group length recomputed
        } else {
            dataset.push_back(el);
        }
    }
    if (!find_element(meta, {0x0002, 0x0010}))
        meta.push_back(make_string_element({0x0002, 0x0010}, "UI", kTransferSyntaxExplicitLE));
    std::stable_sort(meta.begin(), meta.end(),
                     [](const DicomElement& a, const DicomElement& b) { return a.tag < b.tag; });

    Writer meta_writer;
    for (const auto& el : meta) meta_writer.element(el);

    Writer w;
    w.out.assign(128, 0);
    w.out.push_back('D');
    w.out.push_back('I');
    w.out.push_back('C');
    w.out.push_back('M');
    DicomElement group_length;
    group_length.tag = {0x0002, 0x0000};
    group_length.vr = "UL";
    const std::uint32_t glen = static_cast<std::uint32_t>(meta_writer.out.size());
    group_length.payload = {static_cast<std::uint8_t>(glen & 0xFF),
                            static_cast<std::uint8_t>((glen >> 8) & 0xFF),
                            static_cast<std::uint8_t>((glen >> 16) & 0xFF),
                            static_cast<std::uint8_t>((glen >> 24) & 0xFF)};
    w.element(group_length);
    w.raw(meta_writer.out);
    for (const auto& el : dataset) w.element(el);
    return w.out;
}

/// Emit a minimal Explicit VR LE file that parse_file/extract_record/
/// extract_pixels invert exactly on every populated field.
inline std::vector<std::uint8_t> write_file(const MetaRecord& rec, const PixelSlab& pixels) {
    using namespace detail;
    if (pixels.rows <= 0 || pixels.cols <= 0)
        throw InvalidRecord("pixel slab has non-positive dimensions");
    if (pixels.bits_stored < 1 || pixels.bits_stored > 16)
        throw InvalidRecord("bits stored out of range");
    const std::size_t n = static_cast<std::size_t>(pixels.rows) *
                          static_cast<std::size_t>(pixels.cols);
    if (pixels.samples.size() != n) throw InvalidRecord("sample count != rows*cols");
    const std::uint32_t limit = 1u << pixels.bits_stored;
    for (const auto s : pixels.samples)
        if (s >= limit) throw InvalidRecord("sample exceeds bits_stored range");
    if (rec.rows && *rec.rows != pixels.rows) throw InvalidRecord("record rows != slab rows");
    if (rec.cols && *rec.cols != pixels.cols) throw InvalidRecord("record cols != slab cols");
    if (rec.tr_ms && *rec.tr_ms <= 0) throw InvalidRecord("tr_ms must be positive");
    if (rec.fov_mm && *rec.fov_mm <= 0) throw InvalidRecord("fov_mm must be positive");
    for (const auto& pct : {rec.percent_sampling, rec.percent_phase_fov})
        if (pct && (*pct <= 0 || *pct > 200)) throw InvalidRecord("percent field out of (0,200]");
    if (detail::classify_weighting(rec.protocol_name) != rec.weighting)
        throw InvalidRecord("protocol name does not encode the requested weighting");

    std::vector<DicomElement> els;
    els.push_back(make_string_element({0x0002, 0x0002}, "UI", "1.2.840.10008.5.1.4.1.1.4"));
    els.push_back(make_string_element(
        {0x0002, 0x0003}, "UI",
        hash_uid(rec.series_id + "/" + std::to_string(rec.instance_number.value_or(0)), "sop")));
    els.push_back(make_string_element({0x0002, 0x0010}, "UI", kTransferSyntaxExplicitLE));

    els.push_back(make_string_element({0x0008, 0x0060}, "CS", "MR"));
    els.push_back(make_string_element(
        kSopInstanceUid, "UI",
        hash_uid(rec.series_id + "/" + std::to_string(rec.instance_number.value_or(0)), "sop")));
    if (rec.sex != Sex::other)
        els.push_back(make_string_element(kPatientSex, "CS", to_string(rec.sex)));
    if (rec.age_years)
        els.push_back(make_string_element(kPatientAge, "AS", format_age(*rec.age_years)));
    if (rec.weight_kg)
        els.push_back(make_string_element(kPatientWeight, "DS", format_ds(*rec.weight_kg)));
    if (!rec.body_part.empty())
        els.push_back(make_string_element(kBodyPart, "CS", rec.body_part));
    if (rec.slice_thickness_mm)
        els.push_back(make_string_element(kSliceThickness, "DS", format_ds(*rec.slice_thickness_mm)));
    if (rec.tr_ms) els.push_back(make_string_element(kRepetitionTime, "DS", format_ds(*rec.tr_ms)));
    if (rec.te_ms) els.push_back(make_string_element(kEchoTime, "DS", format_ds(*rec.te_ms)));
    if (rec.nex) els.push_back(make_string_element(kNumberOfAverages, "DS", format_ds(*rec.nex)));
    if (rec.percent_sampling)
        els.push_back(make_string_element(kPercentSampling, "DS", format_ds(*rec.percent_sampling)));
    if (rec.percent_phase_fov)
        els.push_back(make_string_element(kPercentPhaseFov, "DS", format_ds(*rec.percent_phase_fov)));
    if (!rec.protocol_name.empty())
        els.push_back(make_string_element(kProtocolName, "LO", rec.protocol_name));
    if (rec.fov_mm)
        els.push_back(make_string_element(kReconstructionDiameter, "DS", format_ds(*rec.fov_mm)));
    if (!rec.coil.empty()) els.push_back(make_string_element(kReceiveCoil, "SH", rec.coil));
    if (!rec.study_id.empty()) els.push_back(make_string_element(kStudyUid, "UI", rec.study_id));
    if (!rec.series_id.empty()) els.push_back(make_string_element(kSeriesUid, "UI", rec.series_id));
    if (rec.instance_number)
        els.push_back(make_string_element(kInstanceNumber, "IS", std::to_string(*rec.instance_number)));
    switch (rec.plane) { // canonical direction cosines per plane
        case Plane::sagittal:
            els.push_back(make_string_element(kImageOrientation, "DS", "0\\1\\0\\0\\0\\-1"));
            break;
        case Plane::coronal:
            els.push_back(make_string_element(kImageOrientation, "DS", "1\\0\\0\\0\\0\\-1"));
            break;
        case Plane::axial:
            els.push_back(make_string_element(kImageOrientation, "DS", "1\\0\\0\\0\\1\\0"));
            break;
        case Plane::unknown:
            break; // omitted; extract_record maps absence to unknown
    }
    if (rec.slice_location_mm)
        els.push_back(make_string_element(kSliceLocation, "DS", format_ds(*rec.slice_location_mm)));
    els.push_back(make_us_element({0x0028, 0x0002}, 1));
    els.push_back(make_string_element({0x0028, 0x0004}, "CS", "MONOCHROME2"));
    els.push_back(make_us_element(kRows, static_cast<std::uint16_t>(pixels.rows)));
    els.push_back(make_us_element(kCols, static_cast<std::uint16_t>(pixels.cols)));
    if (rec.pixel_spacing_mm)
        els.push_back(make_string_element(kPixelSpacing, "DS",
                                          format_ds(rec.pixel_spacing_mm->first) + "\\" +
                                              format_ds(rec.pixel_spacing_mm->second)));
    els.push_back(make_us_element(kBitsAllocated, 16));
    els.push_back(make_us_element(kBitsStored, static_cast<std::uint16_t>(pixels.bits_stored)));
    els.push_back(make_us_element(kHighBit, static_cast<std::uint16_t>(pixels.bits_stored - 1)));
    els.push_back(make_us_element(kPixelRepresentation, 0));

    DicomElement pixel_el;
    pixel_el.tag = kPixelData;
    pixel_el.vr = "OW";
    pixel_el.payload.reserve(n * 2);
    for (const auto s : pixels.samples) {
        pixel_el.payload.push_back(static_cast<std::uint8_t>(s & 0xFF));
        pixel_el.payload.push_back(static_cast<std::uint8_t>((s >> 8) & 0xFF));
    }
    pixel_el.decoded = pixel_el.payload;
    els.push_back(std::move(pixel_el));

    return serialize_elements(els);
}

} // namespace protoscope::dicom
