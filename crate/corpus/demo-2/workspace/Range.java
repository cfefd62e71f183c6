class Range {
    boolean inRange(int value, int limit) {
        return value <= limit;
    }
}
