#include "sphinx/maskcipher.hpp"

#include "sphinx/error.hpp"
#include "sphinx/splitmix64.hpp"

#include <zlib.h>

namespace sphinx::maskcipher {

std::vector<std::uint64_t> pack_mask(const MaskBits& mask)
{
    std::vector<std::uint64_t> words((mask.size() + 63) / 64, 0);
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) words[i / 64] |= std::uint64_t{1} << (i % 64);
    return words;
}

MaskBits unpack_mask(std::span<const std::uint64_t> words, std::size_t bit_len)
{
    MaskBits mask(bit_len, false);
    for (std::size_t i = 0; i < bit_len; ++i) mask[i] = (words[i / 64] >> (i % 64)) & 1;
    return mask;
}

std::vector<std::uint64_t> keystream(std::uint64_t key, std::size_t n)
{
    SplitMix64 gen(key);
    std::vector<std::uint64_t> out(n);
    for (auto& w : out) w = gen();
    return out;
}

std::uint32_t crc32_words(std::span<const std::uint64_t> words)
{
    std::vector<unsigned char> bytes;
    bytes.reserve(words.size() * 8);
    for (auto w : words)
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(w >> (8 * b)));
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

MaskCiphertext encrypt_mask(const MaskBits& mask, const DeviceKey& key)
{
    MaskCiphertext ct;
    ct.words = pack_mask(mask);
    ct.bit_len = static_cast<std::uint32_t>(mask.size());
    ct.crc32 = crc32_words(ct.words);
    const auto ks = keystream(key.key, ct.words.size());
    for (std::size_t i = 0; i < ct.words.size(); ++i) ct.words[i] ^= ks[i];
    return ct;
}

MaskBits decrypt_mask(const MaskCiphertext& ct, const DeviceKey& key)
{
    if (ct.words.size() != (static_cast<std::size_t>(ct.bit_len) + 63) / 64)
        throw BadKeyOrCorrupt("mask ciphertext length does not match its bit length");
    auto plain = ct.words;
    const auto ks = keystream(key.key, plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i) plain[i] ^= ks[i];
    if (crc32_words(plain) != ct.crc32) throw BadKeyOrCorrupt("mask checksum mismatch: wrong device key or corrupt image");
    return unpack_mask(plain, ct.bit_len);
}

DeviceKey derive_key(std::uint64_t device_secret, std::uint64_t challenge) noexcept
{
    SplitMix64 gen(device_secret ^ challenge);
    return DeviceKey{gen(), challenge};
}

} // namespace sphinx::maskcipher
