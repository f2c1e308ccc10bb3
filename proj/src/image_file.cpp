#include "sphinx/image_file.hpp"

#include "sphinx/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <iterator>

namespace sphinx::image {
namespace {

class Writer {
public:
    template <typename T>
    void put(T value)
    {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bytes_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
    }

    void put_bytes(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <typename T>
    T get()
    {
        need(sizeof(T));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::span<const std::uint8_t> get_bytes(std::size_t n)
    {
        need(n);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (bytes_.size() - pos_ < n) throw ImageFormatError("image truncated");
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

ImageFile make_plain(isa::MemoryImage image)
{
    ImageFile f;
    f.real_count = static_cast<std::uint32_t>(image.text.size());
    f.image = std::move(image);
    return f;
}

ImageFile make_obfuscated(isa::MemoryImage image, const MaskBits& mask, const maskcipher::DeviceKey& key,
                          double entropy, std::uint64_t build_seed)
{
    if (mask.size() != image.text.size())
        throw ImageFormatError(fmt::format("mask has {} bits for {} text words", mask.size(), image.text.size()));
    ImageFile f;
    f.obfuscated = true;
    f.entropy_ppm = static_cast<std::uint32_t>(std::lround(entropy * 1e6));
    f.build_seed = build_seed;
    f.real_count = static_cast<std::uint32_t>(popcount(mask));
    f.key_id = key.key_id;
    f.mask = maskcipher::encrypt_mask(mask, key);
    f.image = std::move(image);
    return f;
}

std::vector<std::uint8_t> serialize(const ImageFile& f)
{
    const auto& img = f.image;
    Writer w;
    w.put<std::uint32_t>(kMagic);
    w.put<std::uint16_t>(kVersion);
    w.put<std::uint16_t>(f.obfuscated ? kFlagObfuscated : 0);
    w.put<std::uint32_t>(img.entry);
    w.put<std::uint32_t>(img.text_base);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(img.text.size()));
    w.put<std::uint32_t>(img.data_base);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(img.data.size()));
    w.put<std::uint32_t>(f.entropy_ppm);
    w.put<std::uint64_t>(f.build_seed);
    w.put<std::uint32_t>(f.real_count);
    w.put<std::uint64_t>(f.key_id);
    w.put<std::uint32_t>(f.obfuscated ? f.mask.bit_len : 0);
    w.put<std::uint32_t>(f.obfuscated ? f.mask.crc32 : 0);
    for (auto word : img.text) w.put<std::uint32_t>(word);
    w.put_bytes(img.data);
    if (f.obfuscated)
        for (auto word : f.mask.words) w.put<std::uint64_t>(word);
    return w.take();
}

ImageFile deserialize(std::span<const std::uint8_t> bytes)
{
    Reader r(bytes);
    if (r.get<std::uint32_t>() != kMagic) throw ImageFormatError("bad magic");
    if (const auto v = r.get<std::uint16_t>(); v != kVersion)
        throw ImageFormatError(fmt::format("unsupported version {}", v));
    const auto flags = r.get<std::uint16_t>();
    if (flags & ~kFlagObfuscated) throw ImageFormatError(fmt::format("unknown flags 0x{:04x}", flags));

    ImageFile f;
    auto& img = f.image;
    f.obfuscated = (flags & kFlagObfuscated) != 0;
    img.entry = r.get<std::uint32_t>();
    img.text_base = r.get<std::uint32_t>();
    const auto text_count = r.get<std::uint32_t>();
    img.data_base = r.get<std::uint32_t>();
    const auto data_len = r.get<std::uint32_t>();
    f.entropy_ppm = r.get<std::uint32_t>();
    f.build_seed = r.get<std::uint64_t>();
    f.real_count = r.get<std::uint32_t>();
    f.key_id = r.get<std::uint64_t>();
    const auto mask_bits = r.get<std::uint32_t>();
    const auto mask_crc = r.get<std::uint32_t>();

    if (text_count > r.remaining() / 4) throw ImageFormatError("image truncated");
    img.text.resize(text_count);
    for (auto& word : img.text) word = r.get<std::uint32_t>();
    const auto data = r.get_bytes(data_len);
    img.data.assign(data.begin(), data.end());

    if (f.obfuscated) {
        if (mask_bits != text_count)
            throw ImageFormatError(fmt::format("mask length {} does not match {} text words", mask_bits, text_count));
        if (f.real_count > text_count) throw ImageFormatError("real_count exceeds text word count");
        f.mask.bit_len = mask_bits;
        f.mask.crc32 = mask_crc;
        f.mask.words.resize((static_cast<std::size_t>(mask_bits) + 63) / 64);
        for (auto& word : f.mask.words) word = r.get<std::uint64_t>();
    } else if (mask_bits != 0) {
        throw ImageFormatError("mask fields set on an unobfuscated image");
    }
    if (r.remaining() != 0) throw ImageFormatError("trailing bytes after image");

    if (img.text_base % 4 != 0) throw ImageFormatError("text base not word-aligned");
    if (img.entry < img.text_base || img.entry >= img.text_end() || img.entry % 4 != 0)
        throw ImageFormatError("entry outside text segment");
    const auto text_end = static_cast<std::uint64_t>(img.text_base) + 4ull * text_count;
    const auto data_end = static_cast<std::uint64_t>(img.data_base) + data_len;
    if (data_len > 0 && img.data_base < text_end && img.text_base < data_end)
        throw ImageFormatError("text and data segments overlap");
    return f;
}

void write_file(const std::filesystem::path& path, const ImageFile& file)
{
    const auto bytes = serialize(file);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("write to '{}' failed", path.string()));
}

ImageFile read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

} // namespace sphinx::image
