/* Codec fixture; the expected call edges are hand-enumerated in tests. */
#include <stddef.h>

static int checkBounds(size_t index, size_t limit) {
    if (index >= limit) {
        return 0;
    }
    return 1;
}

static int readByte(const char *buffer, size_t index, size_t limit) {
    if (!checkBounds(index, limit)) {
        return -1;
    }
    return buffer[index];
}

int combine(int high, int low) {
    return (high << 8) | low;
}

int decodeHeader(const char *buffer, size_t limit) {
    int first = readByte(buffer, 0, limit);
    int second = readByte(buffer, 1, limit);
    return combine(first, second);
}

int decodePacket(const char *buffer, size_t limit) {
    int header = decodeHeader(buffer, limit);
    if (header < 0) {
        return decodePacket(buffer, limit + 1);
    }
    return header;
}
