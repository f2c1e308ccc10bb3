#include "sphinx/assembler.hpp"
#include "sphinx/error.hpp"
#include "sphinx/image_file.hpp"
#include "sphinx/maskcipher.hpp"

#include <doctest.h>

#include <filesystem>

using namespace sphinx;

namespace {

isa::MemoryImage sample()
{
    return isa::assemble(isa::parse_assembly(".text\nla a0, v\nlw a0, 0(a0)\nli a7, 93\necall\n.data\nv: .word 3\n"));
}

std::uint32_t u32_at(const std::vector<std::uint8_t>& b, std::size_t off)
{
    return b[off] | b[off + 1] << 8 | b[off + 2] << 16 | static_cast<std::uint32_t>(b[off + 3]) << 24;
}

} // namespace

TEST_CASE("plain image layout")
{
    const auto img = sample();
    const auto bytes = image::serialize(image::make_plain(img));
    REQUIRE(bytes.size() == image::kHeaderSize + 4 * img.text.size() + img.data.size());
    CHECK(u32_at(bytes, 0) == 0x53504858u);
    CHECK(bytes[0] == 'X');
    CHECK(bytes[3] == 'S');
    CHECK(bytes[4] == 1);
    CHECK(bytes[6] == 0);
    CHECK(u32_at(bytes, 16) == img.text.size());
    CHECK(u32_at(bytes, 20) == 0x10000u);
    CHECK(u32_at(bytes, 40) == img.text.size());
    CHECK(u32_at(bytes, 60) == img.text[0]);

    const auto back = image::deserialize(bytes);
    CHECK_FALSE(back.obfuscated);
    CHECK(back.image.text == img.text);
    CHECK(back.image.data == img.data);
    CHECK(back.image.entry == img.entry);
}

TEST_CASE("obfuscated image roundtrip")
{
    const auto img = sample();
    const MaskBits mask = {true, false, true, true, true, true};
    auto with_decoy = img;
    with_decoy.text.insert(with_decoy.text.begin() + 1, 0x00000013u);
    const auto key = maskcipher::derive_key(11, 22);
    const auto file = image::make_obfuscated(with_decoy, mask, key, 0.25, 77);
    CHECK(file.real_count == 5);
    CHECK(file.entropy_ppm == 250000);
    const auto bytes = image::serialize(file);
    CHECK(bytes.size() == image::kHeaderSize + 4 * 6 + 4 + 8);
    const auto back = image::deserialize(bytes);
    CHECK(back.obfuscated);
    CHECK(back.mask == file.mask);
    CHECK(back.key_id == 22);
    CHECK(back.build_seed == 77);
    CHECK(maskcipher::decrypt_mask(back.mask, key) == mask);
    CHECK(image::serialize(back) == bytes);

    CHECK_THROWS_AS(image::make_obfuscated(img, mask, key, 0.25, 77), ImageFormatError);
}

TEST_CASE("malformed images")
{
    const auto bytes = image::serialize(image::make_plain(sample()));
    auto bad = bytes;
    bad[0] ^= 1;
    CHECK_THROWS_AS(image::deserialize(bad), ImageFormatError);
    bad = bytes;
    bad[4] = 2;
    CHECK_THROWS_AS(image::deserialize(bad), ImageFormatError);
    bad = bytes;
    bad[6] = 4;
    CHECK_THROWS_AS(image::deserialize(bad), ImageFormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(image::deserialize(bad), ImageFormatError);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(image::deserialize(bad), ImageFormatError);
    bad = bytes;
    bad[8] = 0x40; // entry past text
    CHECK_THROWS_AS(image::deserialize(bad), ImageFormatError);
    CHECK_THROWS_AS(image::deserialize(std::vector<std::uint8_t>(10)), ImageFormatError);
}

TEST_CASE("file io")
{
    const auto path = std::filesystem::temp_directory_path() / "sphinx_test_image.img";
    const auto file = image::make_plain(sample());
    image::write_file(path, file);
    CHECK(image::serialize(image::read_file(path)) == image::serialize(file));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(image::read_file(path), Error);
}
