#include "cmtda/container.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

namespace cmtda {

void write_container(const std::string& path, const std::string& kind,
                     const std::vector<std::pair<std::string, std::string>>& fields,
                     const void* payload, std::size_t payload_bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FileMissingError("cannot open for writing: " + path);
    os << "CMTDA " << kind << " 1\n";
    for (const auto& [k, v] : fields) os << k << '=' << v << '\n';
    os << "payload_bytes=" << payload_bytes << '\n';
    os << "---\n";
    os.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
    if (!os) throw FormatError("write failed: " + path);
}

Container read_container(const std::string& path, const std::string& expect_kind) {
    if (!std::filesystem::exists(path)) throw FileMissingError("missing file: " + path);
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FileMissingError("cannot open: " + path);

    Container c;
    std::string line;
    if (!std::getline(is, line)) throw FormatError("empty container: " + path);
    {
        std::istringstream ls(line);
        std::string magic;
        ls >> magic >> c.kind >> c.version;
        if (magic != "CMTDA" || c.kind.empty())
            throw FormatError("not a CMTDA container: " + path);
        if (c.kind != expect_kind)
            throw FormatError("container kind '" + c.kind + "' where '" + expect_kind +
                              "' expected: " + path);
        if (c.version != 1)
            throw FormatError("unsupported container version " + std::to_string(c.version) + ": " +
                              path);
    }
    std::size_t payload_bytes = 0;
    bool saw_sep = false;
    while (std::getline(is, line)) {
        if (line == "---") {
            saw_sep = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("malformed header line in " + path);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "payload_bytes")
            payload_bytes = static_cast<std::size_t>(std::stoull(val));
        else
            c.fields[key] = val;
    }
    if (!saw_sep) throw FormatError("truncated container header: " + path);
    c.payload.resize(payload_bytes);
    is.read(c.payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::size_t>(is.gcount()) != payload_bytes)
        throw FormatError("truncated container payload: " + path);
    return c;
}

}  // namespace cmtda
