class Calc {
    int increment(int x) {
        return x;
    }
}
