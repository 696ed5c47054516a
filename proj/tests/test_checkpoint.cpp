#include <gtest/gtest.h>

#include <filesystem>

#include "awm/checkpoint.hpp"

using namespace awm;

namespace {

std::vector<uint8_t> to_bytes(const std::string& s) {
    return std::vector<uint8_t>(s.begin(), s.end());
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
    ConvNet net = ConvNet::make("awm-cnn-v1", 31337);
    const std::string path = (std::filesystem::temp_directory_path() / "awm_ckpt_rt.ckpt").string();
    save_checkpoint(net, path);
    ConvNet back = load_checkpoint(path);
    EXPECT_EQ(back.arch(), net.arch());
    ASSERT_EQ(back.params().size(), net.params().size());
    for (size_t i = 0; i < net.params().size(); ++i) {
        EXPECT_EQ(back.params()[i].name, net.params()[i].name);
        EXPECT_EQ(back.params()[i].value.data, net.params()[i].value.data);
    }
    std::filesystem::remove(path);
}

TEST(Checkpoint, MaskSectionRoundTrips) {
    ConvNet net = ConvNet::make("awm-mlp-v1", 4);
    net.params()[0].mask.assign(net.params()[0].size(), 1);
    net.params()[0].mask[3] = 0;
    net.params()[0].value.data[3] = 0.0f;
    const std::string bytes = serialize_checkpoint(net);
    ConvNet back = deserialize_checkpoint(to_bytes(bytes));
    ASSERT_TRUE(back.params()[0].has_mask());
    EXPECT_EQ(back.params()[0].mask[3], 0);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
}

TEST(Checkpoint, BadMagicRejected) {
    ConvNet net = ConvNet::make("awm-mlp-v1", 4);
    std::string bytes = serialize_checkpoint(net);
    bytes[0] = 'X';
    try {
        deserialize_checkpoint(to_bytes(bytes));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
    }
}

TEST(Checkpoint, VersionMismatchDistinctFromBadMagic) {
    ConvNet net = ConvNet::make("awm-mlp-v1", 4);
    std::string bytes = serialize_checkpoint(net);
    bytes[3] = '9';  // AWM9
    try {
        deserialize_checkpoint(to_bytes(bytes));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
    }
}

TEST(Checkpoint, TruncationRejected) {
    ConvNet net = ConvNet::make("awm-mlp-v1", 4);
    const std::string bytes = serialize_checkpoint(net);
    for (size_t cut : {bytes.size() - 1, bytes.size() / 2, size_t{10}}) {
        try {
            deserialize_checkpoint(to_bytes(bytes.substr(0, cut)));
            FAIL() << "expected DataError at cut " << cut;
        } catch (const DataError& e) {
            EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
        }
    }
}

TEST(Checkpoint, TrailingBytesRejected) {
    ConvNet net = ConvNet::make("awm-mlp-v1", 4);
    std::string bytes = serialize_checkpoint(net) + "x";
    EXPECT_THROW(deserialize_checkpoint(to_bytes(bytes)), DataError);
}

TEST(Checkpoint, ArchMismatchRejected) {
    ConvNet cnn = ConvNet::make("awm-cnn-v1", 4);
    std::vector<ParamTensor> params;
    for (const auto& p : cnn.params()) {
        ParamTensor copy(p.name, p.value.shape);
        copy.value = p.value;
        params.push_back(std::move(copy));
    }
    try {
        ConvNet::from_params("awm-mlp-v1", std::move(params));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("arch mismatch"), std::string::npos);
    }
}

TEST(Checkpoint, UnknownArchRejected) {
    EXPECT_THROW(ConvNet::make("awm-rnn-v1", 0), ConfigError);
}

// header + names/counts + 4 bytes per parameter value + mask marker
TEST(Checkpoint, FileSizeMatchesParameterCount) {
    ConvNet net = ConvNet::make("awm-cnn-v1", 5);
    size_t expect = 4;                       // magic
    expect += 4 + net.arch().size();         // arch descriptor
    for (const auto& p : net.params()) expect += 4 + p.name.size() + 4 + 4 * p.size();
    expect += 1;                             // mask marker (no masks)
    EXPECT_EQ(serialize_checkpoint(net).size(), expect);
    // the fixed classifier has 225,034 parameters
    EXPECT_EQ(net.param_count(), 225034u);
}

TEST(Checkpoint, MissingFileError) {
    EXPECT_THROW(load_checkpoint("/nonexistent/path/model.ckpt"), DataError);
}
