#pragma once

#include "sphinx/mask.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sphinx::maskcipher {

/// Simulated PUF response: the key a device answers for one challenge.
struct DeviceKey {
    std::uint64_t key = 0;
    std::uint64_t key_id = 0;
};

struct MaskCiphertext {
    std::vector<std::uint64_t> words;
    std::uint32_t bit_len = 0;
    /// CRC-32 of the packed plaintext mask.
    std::uint32_t crc32 = 0;

    bool operator==(const MaskCiphertext&) const = default;
};

/// LSB-first: mask bit i lands in bit (i % 64) of word (i / 64).
std::vector<std::uint64_t> pack_mask(const MaskBits& mask);
MaskBits unpack_mask(std::span<const std::uint64_t> words, std::size_t bit_len);

/// First n outputs of SplitMix64 seeded with key.
std::vector<std::uint64_t> keystream(std::uint64_t key, std::size_t n);

/// Standard CRC-32 (reflected 0xEDB88320) over the words serialized
/// little-endian, 8 bytes each.
std::uint32_t crc32_words(std::span<const std::uint64_t> words);

MaskCiphertext encrypt_mask(const MaskBits& mask, const DeviceKey& key);

/// Throws BadKeyOrCorrupt when the recovered plaintext fails its CRC.
MaskBits decrypt_mask(const MaskCiphertext& ct, const DeviceKey& key);

/// key = first keystream word of (device_secret ^ challenge).
DeviceKey derive_key(std::uint64_t device_secret, std::uint64_t challenge) noexcept;

} // namespace sphinx::maskcipher
