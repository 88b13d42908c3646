#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace webtrap::sandbox {

struct PhpEntry;

struct PhpNull {
    bool operator==(const PhpNull&) const = default;
};

struct PhpArray {
    std::vector<PhpEntry> entries;
    bool operator==(const PhpArray& other) const;
};

struct PhpObject {
    std::string class_name;
    std::vector<PhpEntry> properties;
    bool operator==(const PhpObject& other) const;
};

// Value tree produced by unserialize(). Array and property keys are
// int or string values.
struct PhpValue {
    std::variant<PhpNull, bool, std::int64_t, double, std::string, PhpArray, PhpObject> data;

    bool operator==(const PhpValue& other) const;
};

struct PhpEntry {
    PhpValue key;
    PhpValue value;
    bool operator==(const PhpEntry& other) const = default;
};

class PhpParseError : public std::runtime_error {
public:
    PhpParseError(std::size_t offset, const std::string& message);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

// Parses the complete PHP serialization grammar subset:
//   N;  b:0|1;  i:<n>;  d:<x>;  s:<len>:"<bytes>";  a:<n>:{<k><v>...}
//   O:<len>:"<class>":<n>:{<k><v>...}
// String lengths are byte counts and are enforced. Throws PhpParseError
// with the byte offset of the first violation; trailing bytes are an error.
PhpValue unserialize_php(std::string_view text);

// Inverse of unserialize_php.
std::string serialize_php(const PhpValue& value);

// PHP's var_dump() rendering (objects numbered #1, #2, ... in visit order).
std::string var_dump(const PhpValue& value);

// Class names of every object in the tree, in the order PHP would run
// __wakeup() on them.
std::vector<std::string> object_classes(const PhpValue& value);

// PHP 7.1+ float formatting with serialize_precision = -1 ("0.1", "1",
// "1.0E+25", "INF").
std::string php_float_repr(double value);

}  // namespace webtrap::sandbox
