#pragma once

#include "sphinx/assembler.hpp"
#include "sphinx/maskcipher.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace sphinx::image {

inline constexpr std::uint32_t kMagic = 0x53504858; // "SPHX"
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint16_t kFlagObfuscated = 0x1;
inline constexpr std::size_t kHeaderSize = 60;

/// Loadable container. Little-endian header:
///
///   off size field
///     0    4 magic        0x53504858
///     4    2 version      1
///     6    2 flags        bit0 = obfuscated
///     8    4 entry
///    12    4 text_base
///    16    4 text_count   (words)
///    20    4 data_base
///    24    4 data_len     (bytes)
///    28    4 entropy_ppm
///    32    8 build_seed
///    40    4 real_count
///    44    8 key_id
///    52    4 mask_bit_len
///    56    4 mask_crc32
///
/// followed by the text words, the data bytes and, when obfuscated, the
/// ceil(mask_bit_len / 64) mask ciphertext words.
struct ImageFile {
    isa::MemoryImage image;
    bool obfuscated = false;
    std::uint32_t entropy_ppm = 0;
    std::uint64_t build_seed = 0;
    std::uint32_t real_count = 0;
    std::uint64_t key_id = 0;
    maskcipher::MaskCiphertext mask; ///< empty unless obfuscated
};

ImageFile make_plain(isa::MemoryImage image);

ImageFile make_obfuscated(isa::MemoryImage image, const MaskBits& mask, const maskcipher::DeviceKey& key,
                          double entropy, std::uint64_t build_seed);

std::vector<std::uint8_t> serialize(const ImageFile& file);

/// Throws ImageFormatError on bad magic/version, truncation or inconsistent
/// header fields.
ImageFile deserialize(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, const ImageFile& file);
ImageFile read_file(const std::filesystem::path& path);

} // namespace sphinx::image
