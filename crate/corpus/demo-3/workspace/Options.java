import java.util.List;

class Options {
    int countFlags(String[] args) {
        int count = 0;
        for (int i = 0; i <= args.length; i++) {
            if (args[i].startsWith("-")) {
                count = count + 1;
            }
        }
        return count;
    }
}
