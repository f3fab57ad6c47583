#include <gtest/gtest.h>

#include <sstream>

#include "icl/checks.hpp"
#include "icl/serialize.hpp"

using icl::Activation;
using icl::Rng;

TEST(Checkpoint, RoundTrip) {
    Rng rng(91);
    for (bool full : {false, true})
        for (Activation a : icl::kAllActivations) {
            auto params = icl::random_params(4, 3, full, 0.5, rng);
            if (full) params.layers[1].a.reset();
            std::stringstream buf;
            icl::write_checkpoint(buf, params, a);
            const auto ck = icl::read_checkpoint(buf);
            EXPECT_EQ(ck.params, params);
            EXPECT_EQ(ck.activation, a);
        }
}

TEST(Checkpoint, HeaderLayout) {
    std::stringstream buf;
    icl::write_checkpoint(buf, icl::zero_params(2, 1), Activation::ExpDot);
    const std::string s = buf.str();
    EXPECT_EQ(s.substr(0, 8), "ICLPARAM");
    EXPECT_EQ(s[8], 1);   // version, little-endian
    EXPECT_EQ(s[12], 2);  // d
    EXPECT_EQ(s[16], 1);  // layers
    EXPECT_EQ(s[20], 2);  // activation tag
    EXPECT_EQ(s[21], 0);  // a_block tag
    EXPECT_EQ(s.size(), 22u + 8u * (1 + 4 + 4));
}

TEST(Checkpoint, RejectsCorruptInput) {
    std::stringstream bad_magic("NOTMAGIC");
    EXPECT_THROW(icl::read_checkpoint(bad_magic), icl::FormatError);
    std::stringstream buf;
    icl::write_checkpoint(buf, icl::zero_params(2, 2), Activation::LinearDot);
    std::string s = buf.str();
    std::stringstream truncated(s.substr(0, s.size() - 3));
    EXPECT_THROW(icl::read_checkpoint(truncated), icl::FormatError);
    s[20] = 9;
    std::stringstream bad_tag(s);
    EXPECT_THROW(icl::read_checkpoint(bad_tag), icl::FormatError);
}

TEST(PromptBatch, RoundTrip) {
    Rng rng(92);
    auto batch = icl::random_batch(3, 5, 4, rng);
    const auto more = icl::random_batch(2, 2, 2, rng);
    batch.insert(batch.end(), more.begin(), more.end());
    std::stringstream buf;
    icl::write_prompt_batch(buf, batch);
    const auto back = icl::read_prompt_batch(buf);
    ASSERT_EQ(back.size(), batch.size());
    for (std::size_t k = 0; k < batch.size(); ++k) {
        EXPECT_EQ(back[k].x, batch[k].x);
        EXPECT_EQ(back[k].y, batch[k].y);
        EXPECT_EQ(back[k].z0, batch[k].z0);
    }
}

TEST(PromptBatch, RejectsTruncation) {
    Rng rng(93);
    const auto batch = icl::random_batch(2, 3, 2, rng);
    std::stringstream buf;
    icl::write_prompt_batch(buf, batch);
    const std::string s = buf.str();
    std::stringstream truncated(s.substr(0, s.size() - 1));
    EXPECT_THROW(icl::read_prompt_batch(truncated), icl::FormatError);
}
